//! Experiment configuration: a TOML document with registry defaults,
//! dotted-key overrides and a stable content hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::adversary::InfoSource;
use crate::harness::TrainingSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ql,
    Ppo,
    Nfsp,
    Dqn,
    NeuralNfsp,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ql => "ql",
            Algorithm::Ppo => "ppo",
            Algorithm::Nfsp => "nfsp",
            Algorithm::Dqn => "dqn",
            Algorithm::NeuralNfsp => "neural-nfsp",
        }
    }

    pub fn is_neural(&self) -> bool {
        matches!(self, Algorithm::Dqn | Algorithm::NeuralNfsp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimConfig {
    pub algorithm: Algorithm,
    /// Tabular Q-learning step size (QL and the NFSP best response).
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// NFSP anticipatory parameter.
    pub eta: f64,
    pub ppo_learning_rate: f64,
    pub ppo_clip: f64,
    pub ppo_entropy: f64,
    /// One learner for both seats; otherwise one per seat.
    pub shared: bool,
}

impl Default for VictimConfig {
    fn default() -> Self {
        VictimConfig {
            algorithm: Algorithm::Ql,
            alpha: 0.1,
            epsilon: 0.15,
            gamma: 1.0,
            eta: 0.1,
            ppo_learning_rate: 0.01,
            ppo_clip: 0.2,
            ppo_entropy: 0.01,
            shared: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    Tabular,
    Neural,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub learning_rate: f64,
    pub info: InfoSource,
    /// Hidden widths of the neural adversary; empty picks the per-game default.
    pub hidden: Vec<usize>,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig { kind: AdversaryKind::Tabular, learning_rate: 0.01, info: InfoSource::Private, hidden: Vec::new() }
    }
}

/// Knobs that only some experiments read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Victim algorithms compared side by side.
    pub victims: Vec<Algorithm>,
    /// Games compared side by side (scaling runs).
    pub games: Vec<String>,
    pub budgets: Vec<usize>,
    /// Per-decision removal probability of the random strategy.
    pub random_p: f64,
    pub dropout_p: f64,
    pub ensemble_size: usize,
    /// Per-state masking probability of each ensemble member.
    pub ensemble_p: f64,
    /// Seed whose learned mask is transferred to the other seeds.
    pub transfer_source: u64,
    /// Episodes used to estimate reach and value gaps.
    pub reach_episodes: usize,
    /// Episodes of the forced-play check.
    pub dea_episodes: usize,
    pub dea_threshold: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            victims: Vec::new(),
            games: Vec::new(),
            budgets: Vec::new(),
            random_p: 0.3,
            dropout_p: 0.1,
            ensemble_size: 5,
            ensemble_p: 0.3,
            transfer_source: 42,
            reach_episodes: 5_000,
            dea_episodes: 20_000,
            dea_threshold: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub game: String,
    pub seeds: Vec<u64>,
    /// Concurrent seeds; 0 uses every core.
    pub workers: usize,
    pub victim: VictimConfig,
    pub adversary: AdversaryConfig,
    pub schedule: TrainingSchedule,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::Invalid("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(ExperimentError::Invalid(format!("seed {} listed twice", w[0])));
        }
        if self.schedule.window == 0 {
            return Err(ExperimentError::Invalid("window must be positive".into()));
        }
        if self.schedule.eval_episodes == 0 {
            return Err(ExperimentError::Invalid("eval_episodes must be positive".into()));
        }
        crate::game::GameSpec::by_name(&self.game)?;
        for g in &self.params.games {
            crate::game::GameSpec::by_name(g)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        Ok(toml::from_str(text)?)
    }

    /// Apply `key=value` overrides, where `key` is a dotted path such as
    /// `schedule.outer_iterations`. Values are parsed as TOML, falling back
    /// to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ExperimentError> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml())?;
        for item in overrides {
            let item = item.as_ref();
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| ExperimentError::Override(format!("`{item}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let keys: Vec<&str> = path.trim().split('.').collect();
            set_path(&mut doc, &keys, value).map_err(|m| ExperimentError::Override(format!("{path}: {m}")))?;
        }
        let cfg: ExperimentConfig = toml::from_str(&toml::to_string(&doc).expect("table serializes"))
            .map_err(|e| ExperimentError::Override(e.to_string()))?;
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, keys: &[&str], value: toml::Value) -> Result<(), String> {
    let (last, parents) = keys.split_last().ok_or("empty key")?;
    let mut cur = table;
    for k in parents {
        cur = cur
            .get_mut(*k)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| format!("no section `{k}`"))?;
    }
    match cur.get(*last) {
        None => Err(format!("unknown key `{last}`")),
        Some(old) => {
            // Integers given where floats are expected stay floats.
            let value = match (old, value) {
                (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
            cur.insert(last.to_string(), value);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::registry;

    #[test]
    fn round_trips_through_toml() {
        for id in registry::IDS {
            let cfg = registry::default_config(id).unwrap();
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{id}");
        }
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = registry::default_config("kuhn-tabular").unwrap();
        let out = cfg
            .with_overrides(&["schedule.outer_iterations=3", "victim.alpha=1", "seeds=[1, 2]", "adversary.info=public"])
            .unwrap();
        assert_eq!(out.schedule.outer_iterations, 3);
        assert_eq!(out.victim.alpha, 1.0);
        assert_eq!(out.seeds, vec![1, 2]);
        assert_eq!(out.adversary.info, InfoSource::Public);
        assert_ne!(out.hash(), cfg.hash());
        assert_eq!(cfg.hash(), registry::default_config("kuhn-tabular").unwrap().hash());
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let cfg = registry::default_config("kuhn-tabular").unwrap();
        assert!(matches!(cfg.with_overrides(&["nope=1"]), Err(ExperimentError::Override(_))));
        assert!(matches!(cfg.with_overrides(&["schedule"]), Err(ExperimentError::Override(_))));
        assert!(matches!(cfg.with_overrides(&["schedule.window=\"x\""]), Err(ExperimentError::Override(_))));
    }

    #[test]
    fn empty_or_repeated_seeds_fail_validation() {
        let mut cfg = registry::default_config("kuhn-tabular").unwrap();
        cfg.seeds.clear();
        assert!(matches!(cfg.validate(), Err(ExperimentError::Invalid(_))));
        cfg.seeds = vec![1, 1];
        assert!(matches!(cfg.validate(), Err(ExperimentError::Invalid(_))));
    }
}

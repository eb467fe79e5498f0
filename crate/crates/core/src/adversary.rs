//! Learned adversaries. Each one picks, at every player-0 decision, one
//! option: an action (to remove, or to execute in place of the victim's
//! choice) or, where allowed, "no-op". Training samples from the policy and
//! follows REINFORCE on `-V0`; execution takes the most probable option.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::agent::{sample_weighted, Observation, SimRng};
use crate::game::{Action, ActionSet, Game};
use crate::mask::{ActionFilter, MaskTable};
use crate::nn::{masked_softmax, Adam, Head, Mlp};

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("no episodes logged since the last update")]
    EmptyBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdvMode {
    /// Draw from the policy (training).
    Sample,
    /// Take the most probable option, lowest action on ties (execution).
    Greedy,
}

/// What the adversary conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoSource {
    /// The victim's full information state.
    Private,
    /// Betting history and public card only.
    Public,
}

/// One adversary decision at a victim decision point.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub key: String,
    pub features: Vec<f64>,
    pub legal: ActionSet,
    /// `None` is the no-op option.
    pub choice: Option<Action>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub decisions: Vec<Decision>,
    /// Player 0's return for the episode.
    pub v0: f64,
}

pub trait Adversary: Send {
    /// Choose an option at `obs`, or `None` when there is nothing to decide.
    fn decide(&mut self, obs: &Observation<'_>, mode: AdvMode, rng: &mut SimRng) -> Option<Decision>;

    /// One REINFORCE step over every logged episode.
    fn update(&mut self, logs: &[EpisodeLog]) -> Result<(), AdversaryError>;

    /// `max_o p(o | h) - 1 / |options(h)|`; 0 for unknown states.
    fn confidence(&self, key: &str) -> f64;

    /// Greedy option at a known state.
    fn greedy_choice(&self, key: &str) -> Option<Action>;

    /// Keys seen so far, in key order.
    fn known_states(&self) -> Vec<String>;

    fn boxed_clone(&self) -> Box<dyn Adversary>;

    /// Keep only the `k` most confident states (ties to the smaller key),
    /// each with its greedy removal.
    fn project_top_k(&self, k: usize) -> MaskTable {
        let mut scored: Vec<(String, f64)> = self
            .known_states()
            .into_iter()
            .filter(|key| self.greedy_choice(key).is_some())
            .map(|key| {
                let c = self.confidence(&key);
                (key, c)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut mask = MaskTable::with_budget(k);
        for (key, c) in scored.into_iter().take(k) {
            let a = self.greedy_choice(&key).expect("filtered above");
            mask.insert(key, a, c).expect("within budget");
        }
        mask
    }
}

impl Clone for Box<dyn Adversary> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

fn observed_key(obs: &Observation<'_>, info: InfoSource) -> String {
    match info {
        InfoSource::Private => obs.key().to_string(),
        InfoSource::Public => obs.public_key(),
    }
}

fn observed_features(obs: &Observation<'_>, info: InfoSource) -> Vec<f64> {
    match info {
        InfoSource::Private => obs.features(),
        InfoSource::Public => obs.public_features(),
    }
}

/// Index of the no-op option in tabular preference rows.
const NOOP: usize = 5;

/// Softmax preference table `θ(h, o)` over the legal actions, plus no-op
/// when `with_noop` is set. Updated without a baseline.
#[derive(Clone, Debug)]
pub struct TabularAdversary {
    prefs: BTreeMap<String, (ActionSet, [f64; 6])>,
    pub learning_rate: f64,
    pub with_noop: bool,
    pub info: InfoSource,
}

impl TabularAdversary {
    pub fn new(learning_rate: f64) -> Self {
        TabularAdversary { prefs: BTreeMap::new(), learning_rate, with_noop: false, info: InfoSource::Private }
    }

    /// Options include "leave the victim's action alone".
    pub fn with_noop(mut self) -> Self {
        self.with_noop = true;
        self
    }

    pub fn with_info(mut self, info: InfoSource) -> Self {
        self.info = info;
        self
    }

    pub fn set_preference(&mut self, key: &str, legal: ActionSet, option: Option<Action>, v: f64) {
        let row = self.prefs.entry(key.to_string()).or_insert((legal, [0.0; 6]));
        row.1[option.map_or(NOOP, Action::slot)] = v;
    }

    fn options(&self, legal: ActionSet) -> Vec<Option<Action>> {
        let mut o: Vec<Option<Action>> = legal.iter().map(Some).collect();
        if self.with_noop {
            o.push(None);
        }
        o
    }

    /// Policy over the options at `key`, in option order (actions, then no-op).
    pub fn policy(&self, key: &str, legal: ActionSet) -> Vec<(Option<Action>, f64)> {
        let theta = self.prefs.get(key).map_or([0.0; 6], |r| r.1);
        let opts = self.options(legal);
        let logits: Vec<f64> = opts.iter().map(|o| theta[o.map_or(NOOP, Action::slot)]).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = e.iter().sum();
        opts.into_iter().zip(e).map(|(o, v)| (o, v / z)).collect()
    }

    pub fn preference(&self, key: &str, option: Option<Action>) -> f64 {
        self.prefs.get(key).map_or(0.0, |r| r.1[option.map_or(NOOP, Action::slot)])
    }

    fn min_options(&self) -> usize {
        if self.with_noop {
            1
        } else {
            2
        }
    }
}

fn greedy_index(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

impl Adversary for TabularAdversary {
    fn decide(&mut self, obs: &Observation<'_>, mode: AdvMode, rng: &mut SimRng) -> Option<Decision> {
        let legal = obs.legal();
        if legal.len() < self.min_options() {
            return None;
        }
        let key = observed_key(obs, self.info);
        self.prefs.entry(key.clone()).or_insert((legal, [0.0; 6])).0 = legal;
        let pi = self.policy(&key, legal);
        let p: Vec<f64> = pi.iter().map(|(_, v)| *v).collect();
        let i = match mode {
            AdvMode::Sample => sample_weighted(&p, rng),
            AdvMode::Greedy => greedy_index(&p),
        };
        Some(Decision { key, features: Vec::new(), legal, choice: pi[i].0 })
    }

    fn update(&mut self, logs: &[EpisodeLog]) -> Result<(), AdversaryError> {
        if logs.is_empty() {
            return Err(AdversaryError::EmptyBatch);
        }
        let mut grad: BTreeMap<&str, (ActionSet, [f64; 6])> = BTreeMap::new();
        for ep in logs {
            let reward = -ep.v0;
            for d in &ep.decisions {
                let g = &mut grad.entry(&d.key).or_insert((d.legal, [0.0; 6])).1;
                for (o, p) in self.policy(&d.key, d.legal) {
                    let hit = if o == d.choice { 1.0 } else { 0.0 };
                    g[o.map_or(NOOP, Action::slot)] += reward * (hit - p);
                }
            }
        }
        let lr = self.learning_rate;
        let updates: Vec<(String, (ActionSet, [f64; 6]))> = grad.into_iter().map(|(k, g)| (k.to_string(), g)).collect();
        for (key, (legal, g)) in updates {
            let row = &mut self.prefs.entry(key).or_insert((legal, [0.0; 6])).1;
            for (t, gi) in row.iter_mut().zip(g) {
                *t += lr * gi;
            }
        }
        Ok(())
    }

    fn confidence(&self, key: &str) -> f64 {
        let Some((legal, _)) = self.prefs.get(key) else { return 0.0 };
        let pi = self.policy(key, *legal);
        let max = pi.iter().map(|(_, p)| *p).fold(0.0, f64::max);
        max - 1.0 / pi.len() as f64
    }

    fn greedy_choice(&self, key: &str) -> Option<Action> {
        let (legal, _) = self.prefs.get(key)?;
        let pi = self.policy(key, *legal);
        let p: Vec<f64> = pi.iter().map(|(_, v)| *v).collect();
        pi[greedy_index(&p)].0
    }

    fn known_states(&self) -> Vec<String> {
        self.prefs.keys().cloned().collect()
    }

    fn boxed_clone(&self) -> Box<dyn Adversary> {
        Box::new(self.clone())
    }
}

/// MLP over the observation features with one output per game action plus
/// a final no-op output, restricted to the legal actions and no-op.
/// REINFORCE with a running-mean baseline and Adam.
#[derive(Clone, Debug)]
pub struct NeuralAdversary {
    pub net: Mlp,
    adam: Adam,
    baseline: f64,
    episodes: u64,
    known: BTreeMap<String, (Vec<f64>, ActionSet)>,
    pub info: InfoSource,
}

impl NeuralAdversary {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, num_actions: usize, hidden: &[usize], lr: f64, rng: &mut R) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(hidden);
        dims.push(num_actions + 1);
        let net = Mlp::glorot(&dims, Head::Softmax, rng);
        NeuralAdversary {
            adam: Adam::for_net(&net, lr),
            net,
            baseline: 0.0,
            episodes: 0,
            known: BTreeMap::new(),
            info: InfoSource::Private,
        }
    }

    /// 32 hidden units, or 128-64 for Leduc with 10+ ranks.
    pub fn for_game<R: Rng + ?Sized>(game: &Game, rng: &mut R) -> Self {
        let spec = game.spec();
        let hidden: &[usize] =
            if spec.kind == crate::GameKind::Leduc && spec.rank_count >= 10 { &[128, 64] } else { &[32] };
        Self::new(game.feature_dim(), game.num_actions(), hidden, 1e-3, rng)
    }

    pub fn with_info(mut self, info: InfoSource) -> Self {
        self.info = info;
        self
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    fn allowed(&self, legal: ActionSet) -> Vec<bool> {
        let n = self.net.output_dim();
        (0..n).map(|i| i == n - 1 || legal.iter().any(|a| a.slot() == i)).collect()
    }

    /// Distribution over output slots (last = no-op); zero outside legal + no-op.
    pub fn policy(&self, features: &[f64], legal: ActionSet) -> Vec<f64> {
        let z = self.net.logits(features).expect("feature dimension");
        masked_softmax(&z, &self.allowed(legal))
    }

    fn option_at(&self, legal: ActionSet, slot: usize) -> Option<Action> {
        legal.iter().find(|a| a.slot() == slot)
    }
}

impl Adversary for NeuralAdversary {
    fn decide(&mut self, obs: &Observation<'_>, mode: AdvMode, rng: &mut SimRng) -> Option<Decision> {
        let legal = obs.legal();
        if legal.len() < 2 {
            return None;
        }
        let key = observed_key(obs, self.info);
        let features = observed_features(obs, self.info);
        let p = self.policy(&features, legal);
        let slot = match mode {
            AdvMode::Sample => sample_weighted(&p, rng),
            AdvMode::Greedy => greedy_index(&p),
        };
        self.known.entry(key.clone()).or_insert_with(|| (features.clone(), legal));
        Some(Decision { choice: self.option_at(legal, slot), key, features, legal })
    }

    fn update(&mut self, logs: &[EpisodeLog]) -> Result<(), AdversaryError> {
        if logs.is_empty() {
            return Err(AdversaryError::EmptyBatch);
        }
        if self.episodes == 0 {
            self.baseline = logs.iter().map(|e| -e.v0).sum::<f64>() / logs.len() as f64;
        }
        let noop = self.net.output_dim() - 1;
        let mut grads = vec![0.0; self.net.num_params()];
        let scale = 1.0 / logs.len() as f64;
        for ep in logs {
            let advantage = -ep.v0 - self.baseline;
            if advantage == 0.0 {
                continue;
            }
            for d in &ep.decisions {
                let trace = self.net.forward_trace(&d.features).expect("feature dimension");
                let p = masked_softmax(trace.logits(), &self.allowed(d.legal));
                let chosen = d.choice.map_or(noop, Action::slot);
                // Ascend advantage * log p(choice): descend its negation.
                let dz: Vec<f64> = p
                    .iter()
                    .enumerate()
                    .map(|(i, pi)| -scale * advantage * (f64::from(u8::from(i == chosen)) - pi))
                    .collect();
                self.net.backward_logits(&trace, &dz, &mut grads);
            }
        }
        if grads.iter().any(|g| *g != 0.0) {
            if let Err(e) = self.adam.step(&mut self.net, &grads) {
                log::warn!("skipping adversary update: {e}");
            }
        }
        for ep in logs {
            self.episodes += 1;
            self.baseline += (-ep.v0 - self.baseline) / self.episodes as f64;
        }
        Ok(())
    }

    fn confidence(&self, key: &str) -> f64 {
        let Some((features, legal)) = self.known.get(key) else { return 0.0 };
        let p = self.policy(features, *legal);
        p.iter().copied().fold(0.0, f64::max) - 1.0 / (legal.len() + 1) as f64
    }

    fn greedy_choice(&self, key: &str) -> Option<Action> {
        let (features, legal) = self.known.get(key)?;
        let p = self.policy(features, *legal);
        self.option_at(*legal, greedy_index(&p))
    }

    fn known_states(&self) -> Vec<String> {
        self.known.keys().cloned().collect()
    }

    fn boxed_clone(&self) -> Box<dyn Adversary> {
        Box::new(self.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    /// Remove the chosen option from the legal set before the victim acts.
    Removal,
    /// Replace the victim's chosen action with the chosen option.
    Perturbation,
}

/// Runs an adversary as player 0's action filter and logs its decisions.
pub struct AdversaryFilter<'a> {
    adversary: &'a mut dyn Adversary,
    pub mode: AdvMode,
    pub kind: AttackKind,
    current: Vec<Decision>,
    pub logs: Vec<EpisodeLog>,
}

impl<'a> AdversaryFilter<'a> {
    pub fn new(adversary: &'a mut dyn Adversary, mode: AdvMode, kind: AttackKind) -> Self {
        AdversaryFilter { adversary, mode, kind, current: Vec::new(), logs: Vec::new() }
    }

    pub fn take_logs(&mut self) -> Vec<EpisodeLog> {
        std::mem::take(&mut self.logs)
    }
}

impl ActionFilter for AdversaryFilter<'_> {
    fn retained(&mut self, obs: &Observation<'_>, rng: &mut SimRng) -> ActionSet {
        let legal = obs.legal();
        if self.kind == AttackKind::Perturbation {
            return legal;
        }
        match self.adversary.decide(obs, self.mode, rng) {
            Some(d) => {
                let retained = match d.choice {
                    Some(a) if legal.len() > 1 => legal.without(a),
                    _ => legal,
                };
                self.current.push(d);
                retained
            }
            None => legal,
        }
    }

    fn replace(&mut self, obs: &Observation<'_>, chosen: Action, rng: &mut SimRng) -> Action {
        if self.kind == AttackKind::Removal {
            return chosen;
        }
        match self.adversary.decide(obs, self.mode, rng) {
            Some(d) => {
                let executed = d.choice.filter(|a| obs.legal().contains(*a)).unwrap_or(chosen);
                self.current.push(d);
                executed
            }
            None => chosen,
        }
    }

    fn end_episode(&mut self, p0_return: f64) {
        self.logs.push(EpisodeLog { decisions: std::mem::take(&mut self.current), v0: p0_return });
    }
}

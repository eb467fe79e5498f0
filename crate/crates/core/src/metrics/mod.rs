//! Capacity metrics (CAC_w, CAC_v), reach and value-gap estimates, reward
//! normalization, the damage bound, the CACv-greedy oracle and the
//! forced-play diagnostic.

pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{argmax_action, Agent, Observation, SimRng};
use crate::game::{Action, ActionSet, Game};
use crate::harness::{self, Seats, Streams};
use crate::mask::{ActionFilter, MaskStrategy, MaskTable, VisitLog};
use crate::tabular::QTable;

pub use stats::{linear_fit, log_linear_fit, mean_ci95, pearson, ks_uniform, Fit, MeanCi, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reach needs at least one episode")]
    NoEpisodes,
    #[error("reach is from checkpoint `{reach}` but gaps are from `{gaps}`")]
    CheckpointMismatch { reach: String, gaps: String },
    #[error("mask leaves {0} player-0 state(s) with a choice; forced play needs singletons everywhere")]
    NotSingletonComplete(usize),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
}

/// Reward range of a game, used for normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub r_min: f64,
    pub r_max: f64,
}

impl NormBounds {
    pub const fn new(r_min: f64, r_max: f64) -> Self {
        NormBounds { r_min, r_max }
    }
}

/// `(r - r_min) / (r_max - r_min)`, clipping out-of-range rewards.
pub fn normalize(r: f64, bounds: NormBounds) -> f64 {
    let NormBounds { r_min, r_max } = bounds;
    if r < r_min || r > r_max {
        log::warn!("reward {r} outside [{r_min}, {r_max}], clipping");
    }
    (r.clamp(r_min, r_max) - r_min) / (r_max - r_min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachEntry {
    /// Expected visits per episode.
    pub rho: f64,
    pub legal: ActionSet,
}

/// Per-state expected visits per episode, tagged with the checkpoint it was
/// measured at.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReachMap {
    pub checkpoint: String,
    pub episodes: usize,
    pub states: BTreeMap<String, ReachEntry>,
}

impl ReachMap {
    pub fn from_log(log: &VisitLog, checkpoint: &str) -> Result<Self, MetricsError> {
        if log.episodes == 0 {
            return Err(MetricsError::NoEpisodes);
        }
        let mut states: BTreeMap<String, ReachEntry> = BTreeMap::new();
        for v in &log.visits {
            let e = states.entry(v.key.clone()).or_insert(ReachEntry { rho: 0.0, legal: v.legal });
            e.rho += 1.0;
        }
        for e in states.values_mut() {
            e.rho /= log.episodes as f64;
        }
        Ok(ReachMap { checkpoint: checkpoint.to_string(), episodes: log.episodes, states })
    }

    pub fn rho(&self, key: &str) -> f64 {
        self.states.get(key).map_or(0.0, |e| e.rho)
    }
}

/// Estimate reach by on-policy evaluation rollouts of the frozen agents.
pub fn estimate_reach(
    game: &Game,
    seats: &mut Seats,
    filter: &mut dyn ActionFilter,
    episodes: usize,
    streams: &mut Streams,
    checkpoint: &str,
) -> Result<ReachMap, MetricsError> {
    if episodes == 0 {
        return Err(MetricsError::NoEpisodes);
    }
    let eval = harness::evaluate(game, seats, filter, episodes, streams);
    ReachMap::from_log(&eval.log, checkpoint)
}

/// Wraps a filter and records the victim's action values at every visited
/// player-0 state.
struct GapProbe<'a> {
    inner: &'a mut dyn ActionFilter,
    victim: Box<dyn Agent>,
    values: BTreeMap<String, Vec<(Action, f64)>>,
}

impl ActionFilter for GapProbe<'_> {
    fn retained(&mut self, obs: &Observation<'_>, rng: &mut SimRng) -> ActionSet {
        if !self.values.contains_key(obs.key()) {
            if let Some(v) = self.victim.action_values(obs) {
                self.values.insert(obs.key().to_string(), v);
            }
        }
        self.inner.retained(obs, rng)
    }

    fn replace(&mut self, obs: &Observation<'_>, chosen: Action, rng: &mut SimRng) -> Action {
        self.inner.replace(obs, chosen, rng)
    }

    fn end_episode(&mut self, p0_return: f64) {
        self.inner.end_episode(p0_return);
    }
}

/// Reach, value gaps and the victim's action values, all measured in the
/// same evaluation rollouts.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub reach: ReachMap,
    pub gaps: GapMap,
    /// The victim's values at visited states, as a table.
    pub values: QTable,
}

pub fn measure_checkpoint(
    game: &Game,
    seats: &mut Seats,
    filter: &mut dyn ActionFilter,
    episodes: usize,
    streams: &mut Streams,
    checkpoint: &str,
) -> Result<Checkpoint, MetricsError> {
    if episodes == 0 {
        return Err(MetricsError::NoEpisodes);
    }
    let victim = seats.victim().boxed_clone();
    let mut probe = GapProbe { inner: filter, victim, values: BTreeMap::new() };
    let eval = harness::evaluate(game, seats, &mut probe, episodes, streams);
    // Holds values only; the learning parameters are never used.
    let mut values = QTable::new(0.5, 0.0, 1.0);
    for (key, row) in &probe.values {
        let legal = row.iter().fold(ActionSet::EMPTY, |s, (a, _)| s.with(*a));
        for (a, v) in row {
            values.set(key, legal, *a, *v);
        }
    }
    let gaps = GapMap::from_values(probe.values.iter().map(|(k, v)| (k.as_str(), v.iter().map(|(_, q)| *q).collect())), checkpoint);
    Ok(Checkpoint { reach: ReachMap::from_log(&eval.log, checkpoint)?, gaps, values })
}

/// Per-state value gaps δ(h) ≥ 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapMap {
    pub checkpoint: String,
    pub gaps: BTreeMap<String, f64>,
}

impl GapMap {
    /// Mask-free gap: best minus second-best Q over the legal set.
    pub fn top_gap(q: &QTable, checkpoint: &str) -> Self {
        let gaps = q.iter().map(|(k, row)| (k.to_string(), row.top_gap())).collect();
        GapMap { checkpoint: checkpoint.to_string(), gaps }
    }

    /// Mask-free gaps from arbitrary per-state action values.
    pub fn from_values<'a>(
        values: impl IntoIterator<Item = (&'a str, Vec<f64>)>,
        checkpoint: &str,
    ) -> Self {
        let gaps = values
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by(|a, b| b.total_cmp(a));
                let gap = if v.len() >= 2 { v[0] - v[1] } else { 0.0 };
                (k.to_string(), gap)
            })
            .collect();
        GapMap { checkpoint: checkpoint.to_string(), gaps }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.gaps.get(key).copied().unwrap_or(0.0)
    }
}

/// `Σ_h ρ(h) · 1[|M(h)| > 1]`.
pub fn cac_w(mask: &MaskTable, reach: &ReachMap) -> f64 {
    reach
        .states
        .iter()
        .filter(|(k, e)| mask.apply(k, e.legal).len() > 1)
        .map(|(_, e)| e.rho)
        .sum()
}

/// `Σ_h ρ(h) · δ(h) · 1[|M(h)| > 1]`.
pub fn cac_v(mask: &MaskTable, reach: &ReachMap, gaps: &GapMap) -> Result<f64, MetricsError> {
    if reach.checkpoint != gaps.checkpoint {
        return Err(MetricsError::CheckpointMismatch {
            reach: reach.checkpoint.clone(),
            gaps: gaps.checkpoint.clone(),
        });
    }
    Ok(reach
        .states
        .iter()
        .filter(|(k, e)| mask.apply(k, e.legal).len() > 1)
        .map(|(k, e)| e.rho * gaps.get(k))
        .sum())
}

/// Observed CAC_w for a stochastic strategy: reach mass of visits that kept a choice.
pub fn observed_cac_w(log: &VisitLog) -> f64 {
    if log.episodes == 0 {
        return 0.0;
    }
    let kept = log.visits.iter().filter(|v| v.retained.len() > 1).count();
    kept as f64 / log.episodes as f64
}

/// Observed CAC_v: like [`observed_cac_w`] with each visit weighted by δ.
pub fn observed_cac_v(log: &VisitLog, gaps: &GapMap) -> f64 {
    if log.episodes == 0 {
        return 0.0;
    }
    let total: f64 = log.visits.iter().filter(|v| v.retained.len() > 1).map(|v| gaps.get(&v.key)).sum();
    total / log.episodes as f64
}

/// Mask the `k` states with the largest `ρ(h) δ(h)`, removing the victim's
/// greedy action. Ties go to the smaller key.
pub fn cacv_greedy(k: usize, reach: &ReachMap, gaps: &GapMap, q: &QTable) -> MaskTable {
    let mut scored: Vec<(&str, f64, ActionSet)> = reach
        .states
        .iter()
        .filter(|(_, e)| e.legal.len() > 1)
        .map(|(key, e)| (key.as_str(), e.rho * gaps.get(key), e.legal))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut mask = MaskTable::with_budget(k);
    for (key, score, legal) in scored.into_iter().take(k) {
        let best = argmax_action(legal, |a| q.get(key, a)).expect("legal set has 2+ actions");
        mask.insert(key, best, score).expect("within budget");
    }
    mask
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DamageBound {
    /// `(key, ρ(h) [Q(h, a*) - Q(h, a_f)])` for every state the mask forces.
    pub per_state: Vec<(String, f64)>,
    /// Sum of the per-state terms (independent-branches approximation).
    pub additive: f64,
    /// Largest single-state term: a lower bound on the damage.
    pub single_state: f64,
    /// `Σ ρ(h) max_{a ≠ a*} [Q(h, a*) - Q(h, a)]` over the masked states.
    pub upper: f64,
}

/// Damage estimates for a mask from victim values `q` and reach. Only states
/// reduced to a single action contribute to the forced terms.
pub fn damage_bound(mask: &MaskTable, q: &QTable, reach: &ReachMap) -> DamageBound {
    let mut out = DamageBound::default();
    for (key, entry) in &reach.states {
        let retained = mask.apply(key, entry.legal);
        if retained == entry.legal {
            continue;
        }
        let best = argmax_action(entry.legal, |a| q.get(key, a)).expect("non-empty legal set");
        let q_best = q.get(key, best);
        let worst_other = entry.legal.without(best).iter().map(|a| q_best - q.get(key, a)).fold(0.0, f64::max);
        out.upper += entry.rho * worst_other;
        if retained.len() == 1 {
            let forced = retained.first().expect("singleton");
            let term = entry.rho * (q_best - q.get(key, forced));
            out.additive += term;
            out.single_state = out.single_state.max(term);
            out.per_state.push((key.clone(), term));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeaReport {
    /// Fraction of player-0 decisions that took the forced action.
    pub forced_fraction: f64,
    pub decisions: usize,
    /// Player-1 mean reward per window.
    pub opponent_windows: Vec<f64>,
    /// Standard deviation of the last five opponent windows.
    pub tail_std: f64,
}

impl DeaReport {
    pub fn holds(&self, tail_threshold: f64) -> bool {
        self.forced_fraction == 1.0 && self.tail_std <= tail_threshold
    }
}

/// Train `seats` under a mask that forces every player-0 state, then check
/// that play is forced everywhere and the opponent's reward has settled.
pub fn dea_check(
    game: &Game,
    seats: &mut Seats,
    mask: &MaskTable,
    episodes: usize,
    window: usize,
    streams: &mut Streams,
) -> Result<DeaReport, MetricsError> {
    let states = game.enumerate_info_states()?;
    let mut probe = streams.clone();
    let legal_at = harness::legal_sets(game, &mut probe.chance, 2_000);
    let open = states
        .iter()
        .filter(|k| legal_at.get(k.as_str()).map_or(mask.get(k).is_none(), |legal| mask.apply(k, *legal).len() > 1))
        .count();
    if open > 0 {
        return Err(MetricsError::NotSingletonComplete(open));
    }
    let mut filter = MaskStrategy::Table(mask.clone());
    let mut log = VisitLog::default();
    let mut executed = Vec::new();
    let mut windows = Vec::new();
    let mut acc = 0.0;
    for i in 0..episodes {
        let out = harness::play_logged(game, seats, &mut filter, crate::ActMode::Train, streams, &mut log, &mut executed);
        acc += out[1];
        if (i + 1) % window == 0 {
            windows.push(acc / window as f64);
            acc = 0.0;
        }
    }
    let forced = log
        .visits
        .iter()
        .zip(&executed)
        .filter(|(v, a)| v.retained.len() == 1 && v.retained.contains(**a))
        .count();
    let tail: Vec<f64> = windows.iter().rev().take(5).copied().collect();
    let tail_std = if tail.len() >= 2 { stats::sample_std(&tail) } else { 0.0 };
    Ok(DeaReport {
        forced_fraction: if log.visits.is_empty() { 1.0 } else { forced as f64 / log.visits.len() as f64 },
        decisions: log.visits.len(),
        opponent_windows: windows,
        tail_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Action;
    use crate::mask::Visit;

    const PB: [Action; 2] = [Action::Pass, Action::Bet];

    fn reach(entries: &[(&str, f64)]) -> ReachMap {
        ReachMap {
            checkpoint: "c".into(),
            episodes: 1,
            states: entries
                .iter()
                .map(|(k, r)| (k.to_string(), ReachEntry { rho: *r, legal: ActionSet::of(&PB) }))
                .collect(),
        }
    }

    #[test]
    fn normalize_matches_reported_rows() {
        let leduc = NormBounds::new(-13.0, 13.0);
        let kuhn = NormBounds::new(-2.0, 2.0);
        assert!((normalize(0.05, leduc) - 0.502).abs() < 5e-4);
        // (-1.58 + 13) / 26 = 0.4392, reported as 0.440.
        assert!((normalize(-1.58, leduc) - 0.440).abs() < 1e-3);
        assert!((normalize(0.12, kuhn) - 0.530).abs() < 5e-4);
        assert_eq!(normalize(-13.0, leduc), 0.0);
        assert_eq!(normalize(13.0, leduc), 1.0);
        assert_eq!(normalize(99.0, leduc), 1.0);
    }

    #[test]
    fn cac_w_basics() {
        let r = reach(&[("0", 1.0 / 3.0), ("1", 1.0 / 3.0), ("0pb", 0.1)]);
        let empty = MaskTable::new();
        let full: f64 = r.states.values().map(|e| e.rho).sum();
        assert!((cac_w(&empty, &r) - full).abs() < 1e-15);
        let mut one = MaskTable::new();
        one.insert("0pb", Action::Pass, 1.0).unwrap();
        assert!((cac_w(&one, &r) - (full - 0.1)).abs() < 1e-15);
        let mut all = MaskTable::new();
        for k in ["0", "1", "0pb"] {
            all.insert(k, Action::Bet, 1.0).unwrap();
        }
        assert_eq!(cac_w(&all, &r), 0.0);
    }

    #[test]
    fn cac_v_weights_and_checkpoints() {
        let r = reach(&[("a", 0.5), ("b", 0.25)]);
        let ones = GapMap { checkpoint: "c".into(), gaps: [("a".into(), 1.0), ("b".into(), 1.0)].into() };
        let mask = MaskTable::new();
        assert_eq!(cac_v(&mask, &r, &ones).unwrap(), cac_w(&mask, &r));
        let zeros = GapMap { checkpoint: "c".into(), gaps: [("a".into(), 0.0)].into() };
        assert_eq!(cac_v(&mask, &r, &zeros).unwrap(), 0.0);
        let other = GapMap { checkpoint: "d".into(), ..ones };
        assert!(matches!(cac_v(&mask, &r, &other), Err(MetricsError::CheckpointMismatch { .. })));
    }

    #[test]
    fn reach_from_log_counts_visits_per_episode() {
        let legal = ActionSet::of(&PB);
        let visit = |k: &str| Visit { key: k.into(), legal, retained: legal };
        let log = VisitLog { visits: vec![visit("0"), visit("0pb"), visit("1"), visit("0")], episodes: 4 };
        let r = ReachMap::from_log(&log, "x").unwrap();
        assert_eq!(r.rho("0"), 0.5);
        assert_eq!(r.rho("0pb"), 0.25);
        assert_eq!(r.rho("2"), 0.0);
        assert_eq!(ReachMap::from_log(&VisitLog::default(), "x"), Err(MetricsError::NoEpisodes));
    }

    #[test]
    fn damage_bound_zero_cases() {
        let mut q = QTable::new(0.1, 0.0, 1.0);
        q.set("a", ActionSet::of(&PB), Action::Pass, 1.0);
        q.set("a", ActionSet::of(&PB), Action::Bet, -1.0);
        let r = reach(&[("a", 0.5)]);
        assert_eq!(damage_bound(&MaskTable::new(), &q, &r), DamageBound::default());
        // Removing the worse action forces the best one: zero damage.
        let mut m = MaskTable::new();
        m.insert("a", Action::Bet, 1.0).unwrap();
        let d = damage_bound(&m, &q, &r);
        assert_eq!(d.additive, 0.0);
        let mut m = MaskTable::new();
        m.insert("a", Action::Pass, 1.0).unwrap();
        let d = damage_bound(&m, &q, &r);
        assert_eq!(d.additive, 1.0);
        assert_eq!(d.upper, 1.0);
        assert_eq!(d.single_state, 1.0);
    }
}

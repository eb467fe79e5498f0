//! Tabular PPO: a softmax policy over a preference table, updated once per
//! episode with the clipped surrogate objective and an entropy bonus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TableError;
use crate::agent::{argmax_action, sample_weighted, ActMode, Agent, Observation, SimRng};
use crate::game::{Action, ActionSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoParams {
    pub learning_rate: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    /// Gradient passes over each episode's trajectory.
    pub epochs: usize,
}

impl Default for PpoParams {
    fn default() -> Self {
        PpoParams { learning_rate: 0.01, clip: 0.2, entropy_coef: 0.01, epochs: 4 }
    }
}

/// Preferences θ(s, a); the policy is their softmax over the retained set.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PreferenceTable {
    prefs: BTreeMap<String, [f64; 5]>,
}

impl PreferenceTable {
    pub fn get(&self, key: &str, a: Action) -> f64 {
        self.prefs.get(key).map_or(0.0, |p| p[a.slot()])
    }

    fn row_mut(&mut self, key: &str) -> &mut [f64; 5] {
        if !self.prefs.contains_key(key) {
            self.prefs.insert(key.to_string(), [0.0; 5]);
        }
        self.prefs.get_mut(key).expect("just inserted")
    }

    pub fn set(&mut self, key: &str, a: Action, v: f64) {
        self.row_mut(key)[a.slot()] = v;
    }

    /// Softmax over `retained`, in the set's action order.
    pub fn policy(&self, key: &str, retained: ActionSet) -> Vec<(Action, f64)> {
        let logits: Vec<(Action, f64)> = retained.iter().map(|a| (a, self.get(key, a))).collect();
        let max = logits.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|(_, l)| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        logits.iter().zip(exps).map(|((a, _), e)| (*a, e / z)).collect()
    }

    pub fn prob(&self, key: &str, retained: ActionSet, a: Action) -> f64 {
        self.policy(key, retained).iter().find(|(b, _)| *b == a).map_or(0.0, |(_, p)| *p)
    }
}

#[derive(Clone, Debug)]
struct PpoStep {
    key: String,
    retained: ActionSet,
    action: Action,
    old_prob: f64,
}

/// Tabular PPO victim with a running-mean return baseline per seat.
#[derive(Clone, Debug)]
pub struct PpoLearner {
    pub table: PreferenceTable,
    pub params: PpoParams,
    baseline: [f64; 2],
    episodes: [u64; 2],
    trajectories: [Vec<PpoStep>; 2],
}

impl PpoLearner {
    pub fn new(params: PpoParams) -> Self {
        PpoLearner {
            table: PreferenceTable::default(),
            params,
            baseline: [0.0; 2],
            episodes: [0; 2],
            trajectories: Default::default(),
        }
    }

    pub fn baseline(&self, seat: usize) -> f64 {
        self.baseline[seat]
    }

    /// Clipped-surrogate update for one finished trajectory of `seat`.
    fn update(&mut self, seat: usize, steps: &[PpoStep], ret: f64) -> Result<(), TableError> {
        if steps.is_empty() {
            return Err(TableError::EmptyTrajectory);
        }
        let advantage = ret - self.baseline[seat];
        let PpoParams { learning_rate, clip, entropy_coef, epochs } = self.params;
        for _ in 0..epochs {
            for s in steps {
                let pi = self.table.policy(&s.key, s.retained);
                let p_new = pi.iter().find(|(a, _)| *a == s.action).map_or(0.0, |(_, p)| *p);
                let ratio = p_new / s.old_prob;
                let clipped = (advantage > 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
                let entropy: f64 = -pi.iter().map(|(_, p)| p * p.ln()).sum::<f64>();
                let row = self.table.row_mut(&s.key);
                for (a, p) in &pi {
                    let indicator = if *a == s.action { 1.0 } else { 0.0 };
                    // d ratio / d θ_a = ratio (1[a = taken] - π(a)).
                    let surrogate = if clipped { 0.0 } else { advantage * ratio * (indicator - p) };
                    let entropy_grad = -p * (p.ln() + entropy);
                    row[a.slot()] += learning_rate * (surrogate + entropy_coef * entropy_grad);
                }
            }
        }
        self.episodes[seat] += 1;
        self.baseline[seat] += (ret - self.baseline[seat]) / self.episodes[seat] as f64;
        Ok(())
    }
}

impl Agent for PpoLearner {
    fn name(&self) -> &'static str {
        "ppo"
    }

    fn act(&mut self, seat: usize, obs: &Observation<'_>, retained: ActionSet, mode: ActMode, rng: &mut SimRng) -> Action {
        let key = obs.key();
        match mode {
            ActMode::Eval => argmax_action(retained, |a| self.table.get(key, a)).expect("non-empty"),
            ActMode::Train => {
                let pi = self.table.policy(key, retained);
                let weights: Vec<f64> = pi.iter().map(|(_, p)| *p).collect();
                let (action, old_prob) = pi[sample_weighted(&weights, rng)];
                self.trajectories[seat].push(PpoStep { key: key.to_string(), retained, action, old_prob });
                action
            }
        }
    }

    fn end_episode(&mut self, seat: usize, ret: f64, mode: ActMode, _rng: &mut SimRng) {
        let steps = std::mem::take(&mut self.trajectories[seat]);
        if mode == ActMode::Train && !steps.is_empty() {
            self.update(seat, &steps, ret).expect("non-empty trajectory");
        }
    }

    fn action_values(&self, obs: &Observation<'_>) -> Option<Vec<(Action, f64)>> {
        Some(obs.legal().iter().map(|a| (a, self.table.get(obs.key(), a))).collect())
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PB: [Action; 2] = [Action::Pass, Action::Bet];

    fn step(table: &PreferenceTable, action: Action) -> PpoStep {
        let retained = ActionSet::of(&PB);
        PpoStep { key: "s".into(), retained, action, old_prob: table.prob("s", retained, action) }
    }

    #[test]
    fn policy_is_normalized_over_retained() {
        let mut t = PreferenceTable::default();
        t.set("s", Action::Fold, 3.0);
        t.set("s", Action::Call, -1.0);
        let pi = t.policy("s", ActionSet::of(&[Action::Call, Action::Raise]));
        assert_eq!(pi.len(), 2);
        assert!((pi.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(t.prob("s", ActionSet::of(&[Action::Call, Action::Raise]), Action::Fold), 0.0);
    }

    #[test]
    fn zero_advantage_leaves_only_entropy_gradient() {
        let mut ppo = PpoLearner::new(PpoParams { entropy_coef: 0.0, ..Default::default() });
        ppo.table.set("s", Action::Pass, 0.7);
        let before = ppo.table.clone();
        let s = step(&ppo.table, Action::Pass);
        ppo.update(0, &[s], 0.0).unwrap();
        assert_eq!(ppo.table.get("s", Action::Pass), before.get("s", Action::Pass));
        assert_eq!(ppo.table.get("s", Action::Bet), before.get("s", Action::Bet));

        // With the bonus, a peaked policy is pushed back toward uniform.
        let mut ppo = PpoLearner::new(PpoParams::default());
        ppo.table.set("s", Action::Pass, 0.7);
        let s = step(&ppo.table, Action::Pass);
        ppo.update(0, &[s], 0.0).unwrap();
        assert!(ppo.table.get("s", Action::Pass) < 0.7);
    }

    #[test]
    fn positive_advantage_raises_probability_monotonically() {
        let mut ppo = PpoLearner::new(PpoParams { entropy_coef: 0.0, ..Default::default() });
        let retained = ActionSet::of(&PB);
        let mut last = ppo.table.prob("s", retained, Action::Pass);
        for _ in 0..50 {
            let s = step(&ppo.table, Action::Pass);
            ppo.baseline[0] = 0.0;
            ppo.episodes[0] = 0;
            ppo.update(0, &[s], 1.0).unwrap();
            let p = ppo.table.prob("s", retained, Action::Pass);
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn clipping_stops_large_ratios() {
        let params = PpoParams { learning_rate: 5.0, entropy_coef: 0.0, epochs: 3, clip: 0.2 };
        let mut ppo = PpoLearner::new(params);
        let s = step(&ppo.table, Action::Pass);
        ppo.update(0, std::slice::from_ref(&s), 1.0).unwrap();
        // The first pass overshoots the clip range; later passes contribute nothing.
        let mut single = PpoLearner::new(PpoParams { epochs: 1, ..params });
        single.update(0, &[s], 1.0).unwrap();
        assert_eq!(ppo.table.get("s", Action::Pass), single.table.get("s", Action::Pass));
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let mut ppo = PpoLearner::new(PpoParams::default());
        assert!(matches!(ppo.update(0, &[], 1.0), Err(TableError::EmptyTrajectory)));
    }

    #[test]
    fn baseline_is_running_mean() {
        let mut ppo = PpoLearner::new(PpoParams::default());
        for r in [1.0, -1.0, 2.0] {
            let s = step(&ppo.table, Action::Pass);
            ppo.update(1, &[s], r).unwrap();
        }
        assert!((ppo.baseline(1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(ppo.baseline(0), 0.0);
    }
}

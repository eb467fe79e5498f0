use std::collections::BTreeMap;

use rand::Rng;

use super::{learn_trajectory, QTable, Step};
use crate::agent::{sample_weighted, ActMode, Agent, Observation, SimRng};
use crate::game::{Action, ActionSet};

/// Best-response Q-table plus exact average-strategy visit counts.
#[derive(Clone, Debug)]
pub struct NfspState {
    pub best_response: QTable,
    counts: BTreeMap<String, [u64; 5]>,
    pub eta: f64,
}

impl NfspState {
    pub fn new(best_response: QTable, eta: f64) -> Self {
        assert!((0.0..=1.0).contains(&eta), "eta must be in [0, 1]");
        NfspState { best_response, counts: BTreeMap::new(), eta }
    }

    pub fn record_best_response(&mut self, key: &str, a: Action) {
        if !self.counts.contains_key(key) {
            self.counts.insert(key.to_string(), [0; 5]);
        }
        self.counts.get_mut(key).expect("just inserted")[a.slot()] += 1;
    }

    pub fn set_counts(&mut self, key: &str, counts: &[(Action, u64)]) {
        let row = self.counts.entry(key.to_string()).or_insert([0; 5]);
        for (a, c) in counts {
            row[a.slot()] = *c;
        }
    }

    /// Average strategy restricted to `retained` and renormalized; uniform
    /// when the retained actions carry no mass.
    pub fn average_policy(&self, key: &str, retained: ActionSet) -> Vec<(Action, f64)> {
        let row = self.counts.get(key).copied().unwrap_or([0; 5]);
        let mass: Vec<f64> = retained.iter().map(|a| row[a.slot()] as f64).collect();
        let total: f64 = mass.iter().sum();
        let n = retained.len() as f64;
        retained
            .iter()
            .zip(mass)
            .map(|(a, m)| (a, if total > 0.0 { m / total } else { 1.0 / n }))
            .collect()
    }

    pub fn sample_average<R: Rng + ?Sized>(&self, key: &str, retained: ActionSet, rng: &mut R) -> Action {
        let pi = self.average_policy(key, retained);
        let weights: Vec<f64> = pi.iter().map(|(_, p)| *p).collect();
        pi[sample_weighted(&weights, rng)].0
    }
}

/// Tabular NFSP victim: per seat and episode, plays the ε-greedy best
/// response with probability η and the average strategy otherwise.
#[derive(Clone, Debug)]
pub struct NfspLearner {
    pub state: NfspState,
    use_best_response: [bool; 2],
    trajectories: [Vec<Step>; 2],
}

impl NfspLearner {
    pub fn new(best_response: QTable, eta: f64) -> Self {
        NfspLearner {
            state: NfspState::new(best_response, eta),
            use_best_response: [false; 2],
            trajectories: Default::default(),
        }
    }
}

impl Agent for NfspLearner {
    fn name(&self) -> &'static str {
        "nfsp"
    }

    fn begin_episode(&mut self, seat: usize, mode: ActMode, rng: &mut SimRng) {
        self.use_best_response[seat] = mode == ActMode::Train && rng.random::<f64>() < self.state.eta;
    }

    fn act(&mut self, seat: usize, obs: &Observation<'_>, retained: ActionSet, mode: ActMode, rng: &mut SimRng) -> Action {
        let key = obs.key();
        let action = if self.use_best_response[seat] {
            let a = self.state.best_response.act(key, retained, true, rng);
            self.state.record_best_response(key, a);
            a
        } else {
            self.state.sample_average(key, retained, rng)
        };
        if mode == ActMode::Train {
            self.state.best_response.touch(key, obs.legal());
            self.trajectories[seat].push(Step { key: key.to_string(), retained, action });
        }
        action
    }

    fn end_episode(&mut self, seat: usize, ret: f64, mode: ActMode, _rng: &mut SimRng) {
        let steps = std::mem::take(&mut self.trajectories[seat]);
        if mode == ActMode::Train {
            learn_trajectory(&mut self.state.best_response, &steps, ret);
        }
    }

    fn action_values(&self, obs: &Observation<'_>) -> Option<Vec<(Action, f64)>> {
        Some(obs.legal().iter().map(|a| (a, self.state.best_response.get(obs.key(), a))).collect())
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    const PB: [Action; 2] = [Action::Pass, Action::Bet];

    #[test]
    fn count_normalization() {
        let mut s = NfspState::new(QTable::new(0.1, 0.1, 1.0), 0.1);
        s.set_counts("0", &[(Action::Pass, 3), (Action::Bet, 1)]);
        let pi = s.average_policy("0", ActionSet::of(&PB));
        assert_eq!(pi, vec![(Action::Pass, 0.75), (Action::Bet, 0.25)]);
    }

    #[test]
    fn all_mass_on_removed_action_falls_back_to_uniform() {
        let mut s = NfspState::new(QTable::new(0.1, 0.1, 1.0), 0.1);
        s.set_counts("x", &[(Action::Fold, 10)]);
        let pi = s.average_policy("x", ActionSet::of(&[Action::Call, Action::Raise]));
        assert_eq!(pi, vec![(Action::Call, 0.5), (Action::Raise, 0.5)]);
    }

    proptest! {
        #[test]
        fn restricted_average_policy_is_a_distribution(
            counts in proptest::array::uniform3(0u64..50),
            retained_bits in 1u8..8,
        ) {
            let mut s = NfspState::new(QTable::new(0.1, 0.1, 1.0), 0.1);
            let actions = [Action::Fold, Action::Call, Action::Raise];
            s.set_counts("k", &actions.iter().copied().zip(counts).collect::<Vec<_>>());
            let retained: ActionSet = actions.iter().enumerate()
                .filter(|(i, _)| retained_bits & (1 << i) != 0).map(|(_, a)| *a).collect();
            let pi = s.average_policy("k", retained);
            let total: f64 = pi.iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(pi.iter().all(|(a, p)| retained.contains(*a) && *p >= 0.0));
        }
    }

    #[test]
    fn sampling_matches_counts() {
        let mut s = NfspState::new(QTable::new(0.1, 0.1, 1.0), 0.1);
        s.set_counts("0", &[(Action::Pass, 3), (Action::Bet, 1)]);
        let mut rng = SimRng::seed_from_u64(2);
        let n = 20_000;
        let passes = (0..n).filter(|_| s.sample_average("0", ActionSet::of(&PB), &mut rng) == Action::Pass).count();
        assert!((passes as f64 / n as f64 - 0.75).abs() < 0.015);
    }
}

//! The interface every victim learner implements, and the per-decision
//! observation handed to learners, masks and adversaries.

use std::cell::OnceCell;

use rand_chacha::ChaCha8Rng;

use crate::game::{Action, ActionSet, EpisodeState, Game};

/// Random stream type used throughout a run.
pub type SimRng = ChaCha8Rng;

/// What a player sees at one decision point. Key and features are computed
/// on first use.
pub struct Observation<'a> {
    game: &'a Game,
    state: &'a EpisodeState,
    player: usize,
    legal: ActionSet,
    key: OnceCell<String>,
}

impl<'a> Observation<'a> {
    pub fn new(game: &'a Game, state: &'a EpisodeState, player: usize, legal: ActionSet) -> Self {
        Observation { game, state, player, legal, key: OnceCell::new() }
    }

    pub fn game(&self) -> &Game {
        self.game
    }

    pub fn state(&self) -> &EpisodeState {
        self.state
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn legal(&self) -> ActionSet {
        self.legal
    }

    pub fn key(&self) -> &str {
        self.key.get_or_init(|| self.game.info_state_key(self.state, self.player))
    }

    pub fn public_key(&self) -> String {
        self.game.public_key(self.state, self.player)
    }

    pub fn features(&self) -> Vec<f64> {
        self.game.featurize(self.state, self.player)
    }

    pub fn public_features(&self) -> Vec<f64> {
        self.game.public_features(self.state, self.player)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    /// Explore and record the decision for learning.
    Train,
    /// No exploration, no recording.
    Eval,
}

/// A learning agent able to fill either seat. A shared self-play agent
/// keeps one trajectory per seat.
pub trait Agent: Send {
    fn name(&self) -> &'static str;

    /// Called once per seat before the episode's first decision.
    fn begin_episode(&mut self, _seat: usize, _mode: ActMode, _rng: &mut SimRng) {}

    /// Choose among `retained`, which is never empty.
    fn act(
        &mut self,
        seat: usize,
        obs: &Observation<'_>,
        retained: ActionSet,
        mode: ActMode,
        rng: &mut SimRng,
    ) -> Action;

    /// Called once per seat with that seat's final return; learning happens here.
    fn end_episode(&mut self, seat: usize, ret: f64, mode: ActMode, rng: &mut SimRng);

    /// Called once per episode after every seat's `end_episode`, even when the
    /// agent fills both seats.
    fn finish_episode(&mut self, _mode: ActMode) {}

    /// Value estimates over the legal actions at `obs`, if the agent keeps any.
    fn action_values(&self, _obs: &Observation<'_>) -> Option<Vec<(Action, f64)>> {
        None
    }

    fn boxed_clone(&self) -> Box<dyn Agent>;
}

impl Clone for Box<dyn Agent> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Argmax over `candidates`, breaking ties toward the lowest-ordered action.
pub fn argmax_action(candidates: ActionSet, mut value: impl FnMut(Action) -> f64) -> Option<Action> {
    let mut best: Option<(Action, f64)> = None;
    for a in candidates.iter() {
        let v = value(a);
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

/// Sample an index from unnormalized non-negative weights; uniform if all zero.
pub fn sample_weighted<R: rand::Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..weights.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn argmax_breaks_ties_low() {
        let s = ActionSet::of(&[Action::Fold, Action::Call, Action::Raise]);
        assert_eq!(argmax_action(s, |_| 0.0), Some(Action::Fold));
        assert_eq!(argmax_action(s, |a| if a == Action::Raise { 1.0 } else { 0.0 }), Some(Action::Raise));
        assert_eq!(argmax_action(ActionSet::EMPTY, |_| 0.0), None);
    }

    #[test]
    fn weighted_sampling_respects_zeros() {
        let mut rng = SimRng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(sample_weighted(&[0.0, 2.0, 0.0], &mut rng), 1);
        }
        let mut hits = [0usize; 2];
        for _ in 0..10_000 {
            hits[sample_weighted(&[0.0, 0.0], &mut rng)] += 1;
        }
        assert!(hits[0] > 4500 && hits[1] > 4500);
    }
}

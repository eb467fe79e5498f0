//! Leduc hold'em generalized to N ranks (two suits per rank).

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Action, ActionSet, GameSpec, ToMove};

/// Betting slots encoded per round.
const SLOTS_PER_ROUND: usize = 4;

pub(super) fn feature_dim(ranks: u32) -> usize {
    2 * ranks as usize + 31
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeducState {
    ranks: [u32; 2],
    public: u32,
    round: usize,
    rounds: [Vec<Action>; 2],
    contrib: [u32; 2],
    raises: u32,
    to_move: usize,
    folded: Option<usize>,
    done: bool,
}

impl LeducState {
    pub(super) fn deal<R: Rng + ?Sized>(spec: &GameSpec, rng: &mut R) -> Self {
        let mut deck: Vec<u32> = (0..2 * spec.rank_count).map(|c| c / 2).collect();
        deck.shuffle(rng);
        Self::from_cards([deck[0], deck[1]], deck[2], spec.bets.ante)
    }

    /// A fresh hand with explicit private ranks and the (still hidden) public rank.
    pub fn from_cards(ranks: [u32; 2], public: u32, ante: u32) -> Self {
        LeducState {
            ranks,
            public,
            round: 0,
            rounds: [Vec::with_capacity(4), Vec::with_capacity(4)],
            contrib: [ante, ante],
            raises: 0,
            to_move: 0,
            folded: None,
            done: false,
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn pot_contributions(&self) -> [u32; 2] {
        self.contrib
    }

    /// The public card, once revealed.
    pub fn public_card(&self) -> Option<u32> {
        (self.round == 1).then_some(self.public)
    }

    pub fn private_cards(&self) -> [u32; 2] {
        self.ranks
    }

    pub(super) fn history(&self) -> Vec<Action> {
        self.rounds.concat()
    }

    pub(super) fn to_move(&self) -> ToMove {
        if self.done {
            ToMove::Terminal
        } else {
            ToMove::Player(self.to_move)
        }
    }

    pub(super) fn legal_actions(&self, spec: &GameSpec) -> ActionSet {
        let p = self.to_move;
        let mut set = ActionSet::of(&[Action::Call]);
        if self.contrib[p] < self.contrib[1 - p] {
            set.insert(Action::Fold);
        }
        if self.raises < spec.bets.max_raises {
            set.insert(Action::Raise);
        }
        set
    }

    pub(super) fn apply(&mut self, spec: &GameSpec, action: Action) {
        let p = self.to_move;
        let opp = 1 - p;
        self.rounds[self.round].push(action);
        match action {
            Action::Fold => {
                self.folded = Some(p);
                self.done = true;
            }
            Action::Call => {
                self.contrib[p] = self.contrib[opp];
                if self.rounds[self.round].len() >= 2 {
                    if self.round == 0 {
                        self.round = 1;
                        self.raises = 0;
                        self.to_move = 0;
                    } else {
                        self.done = true;
                    }
                } else {
                    self.to_move = opp;
                }
            }
            Action::Raise => {
                self.contrib[p] = self.contrib[opp] + spec.bets.round_bets[self.round];
                self.raises += 1;
                self.to_move = opp;
            }
            _ => unreachable!("non-Leduc action reached a Leduc state"),
        }
    }

    pub(super) fn returns(&self) -> Option<[f64; 2]> {
        if !self.done {
            return None;
        }
        if let Some(f) = self.folded {
            let lost = f64::from(self.contrib[f]);
            let mut r = [lost, lost];
            r[f] = -lost;
            return Some(r);
        }
        let strength = |rank: u32| (rank == self.public, rank);
        let stake = f64::from(self.contrib[0]);
        Some(match strength(self.ranks[0]).cmp(&strength(self.ranks[1])) {
            Ordering::Greater => [stake, -stake],
            Ordering::Less => [-stake, stake],
            Ordering::Equal => [0.0, 0.0],
        })
    }

    fn letters(actions: &[Action]) -> String {
        actions
            .iter()
            .map(|a| match a {
                Action::Fold => 'f',
                Action::Call => 'c',
                _ => 'r',
            })
            .collect()
    }

    pub(super) fn info_key(&self, player: usize, public_only: bool) -> String {
        let own = if public_only { "?".to_string() } else { self.ranks[player].to_string() };
        let h0 = Self::letters(&self.rounds[0]);
        if self.round == 0 {
            format!("{own}:{h0}")
        } else {
            format!("{own}|{}:{h0}/{}", self.public, Self::letters(&self.rounds[1]))
        }
    }

    pub(super) fn featurize(&self, spec: &GameSpec, player: usize, out: &mut [f64]) {
        let n = spec.rank_count as usize;
        out[self.ranks[player] as usize] = 1.0;
        if self.round == 1 {
            out[n + self.public as usize] = 1.0;
        }
        let base = 2 * n;
        out[base + self.round] = 1.0;
        for (r, actions) in self.rounds.iter().enumerate() {
            for (i, a) in actions.iter().take(SLOTS_PER_ROUND).enumerate() {
                out[base + 2 + r * SLOTS_PER_ROUND * 3 + i * 3 + a.slot()] = 1.0;
            }
        }
        let tail = base + 2 + 2 * SLOTS_PER_ROUND * 3;
        let cap = f64::from(spec.bets.max_loss());
        out[tail] = f64::from(self.contrib[player]) / cap;
        out[tail + 1] = f64::from(self.contrib[1 - player]) / cap;
        out[tail + 2] = f64::from(u8::from(self.contrib[player] < self.contrib[1 - player]));
        out[tail + 3 + player] = 1.0;
    }
}

pub(super) fn enumerate_p0_keys(spec: &GameSpec) -> BTreeSet<String> {
    fn walk(spec: &GameSpec, s: &LeducState, keys: &mut BTreeSet<String>) {
        if let ToMove::Player(p) = s.to_move() {
            if p == 0 {
                keys.insert(s.info_key(0, false));
            }
            for a in s.legal_actions(spec).iter() {
                let mut next = s.clone();
                next.apply(spec, a);
                walk(spec, &next, keys);
            }
        }
    }
    let n = spec.rank_count;
    let mut keys = BTreeSet::new();
    for p in 0..n {
        for o in 0..n {
            for q in 0..n {
                // Two suits per rank.
                if p == o && o == q {
                    continue;
                }
                walk(spec, &LeducState::from_cards([p, o], q, spec.bets.ante), &mut keys);
            }
        }
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{EpisodeState, Game};

    const F: Action = Action::Fold;
    const C: Action = Action::Call;
    const R: Action = Action::Raise;

    fn play(cards: [u32; 2], public: u32, actions: &[Action]) -> LeducState {
        let spec = GameSpec::leduc(3);
        let mut s = LeducState::from_cards(cards, public, 1);
        for a in actions {
            assert!(s.legal_actions(&spec).contains(*a), "{a} illegal after {:?}", s.history());
            s.apply(&spec, *a);
        }
        s
    }

    #[test]
    fn deck_has_two_suits_per_rank() {
        let spec = GameSpec::leduc(3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let s = LeducState::deal(&spec, &mut rng);
            let mut per_rank = [0; 3];
            for r in [s.ranks[0], s.ranks[1], s.public] {
                per_rank[r as usize] += 1;
                counts[r as usize] += 1;
            }
            assert!(per_rank.iter().all(|c| *c <= 2));
        }
        assert!(counts.iter().all(|c| (2700..3300).contains(c)));
    }

    #[test]
    fn legal_actions_follow_the_betting_state() {
        let spec = GameSpec::leduc(3);
        assert_eq!(play([0, 1], 2, &[]).legal_actions(&spec), ActionSet::of(&[C, R]));
        assert_eq!(play([0, 1], 2, &[R]).legal_actions(&spec), ActionSet::of(&[F, C, R]));
        // Raise cap reached.
        assert_eq!(play([0, 1], 2, &[R, R]).legal_actions(&spec), ActionSet::of(&[F, C]));
        assert_eq!(play([0, 1], 2, &[C, R, R]).legal_actions(&spec), ActionSet::of(&[F, C]));
    }

    #[test]
    fn round_transition_reveals_public_card() {
        let s = play([0, 1], 2, &[C, C]);
        assert_eq!(s.round(), 1);
        assert_eq!(s.public_card(), Some(2));
        assert_eq!(s.to_move(), ToMove::Player(0));
        assert_eq!(s.info_key(0, false), "0|2:cc/");
        assert_eq!(s.info_key(1, true), "?|2:cc/");
    }

    #[test]
    fn maximal_hand_loses_thirteen() {
        let s = play([0, 1], 2, &[R, R, C, R, R, C]);
        assert_eq!(s.returns(), Some([-13.0, 13.0]));
    }

    #[test]
    fn fold_forfeits_contribution() {
        let s = play([2, 0], 1, &[R, F]);
        assert_eq!(s.returns(), Some([1.0, -1.0]));
        // P1 folds after the re-raise, forfeiting its 3 chips.
        let s = play([2, 0], 1, &[C, R, R, F]);
        assert_eq!(s.returns(), Some([3.0, -3.0]));
    }

    #[test]
    fn pair_beats_high_card_and_ties_split() {
        let s = play([0, 2], 0, &[C, C, C, C]);
        assert_eq!(s.returns(), Some([1.0, -1.0]));
        let s = play([1, 1], 0, &[C, C, C, C]);
        assert_eq!(s.returns(), Some([0.0, 0.0]));
        let s = play([0, 1], 2, &[C, C, R, C]);
        assert_eq!(s.returns(), Some([-5.0, 5.0]));
    }

    #[test]
    fn feature_layout() {
        let spec = GameSpec::leduc(3);
        let game = Game::new(spec.clone()).unwrap();
        let s = EpisodeState::Leduc(play([1, 0], 2, &[R, C]));
        let f = game.featurize(&s, 0);
        assert_eq!(f.len(), 37);
        assert_eq!(&f[0..3], &[0.0, 1.0, 0.0]);
        assert_eq!(&f[3..6], &[0.0, 0.0, 1.0]);
        assert_eq!(&f[6..8], &[0.0, 1.0]);
        // Round 1 slot 0 = RAISE, slot 1 = CALL.
        assert_eq!(f[8 + 2], 1.0);
        assert_eq!(f[8 + 3 + 1], 1.0);
        assert!(f.iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(f.iter().filter(|x| **x > 0.0).count(), 8);
    }

    #[test]
    fn info_state_counts() {
        // 3 round-1 decision points per private rank; 5 ways into round 2,
        // each with 3 decision points per (private, public) pair.
        for (n, expected) in [(2u32, 66usize), (3, 144), (5, 390), (10, 1530), (20, 6060)] {
            let keys = enumerate_p0_keys(&GameSpec::leduc(n));
            let n = n as usize;
            assert_eq!(keys.len(), expected);
            assert_eq!(expected, 3 * n + 15 * n * n);
        }
    }
}

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Action, ToMove};

/// Card one-hot (3) plus one-hot over the four decision histories.
pub(super) const FEATURE_DIM: usize = 7;

const DECISION_HISTORIES: [&str; 4] = ["", "p", "b", "pb"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KuhnState {
    cards: [u8; 2],
    history: Vec<Action>,
}

impl KuhnState {
    pub(super) fn deal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut deck = [0u8, 1, 2];
        deck.shuffle(rng);
        KuhnState { cards: [deck[0], deck[1]], history: Vec::with_capacity(3) }
    }

    /// Build a state from explicit cards and history (for tests and tree walks).
    pub fn from_parts(cards: [u8; 2], history: &[Action]) -> Self {
        KuhnState { cards, history: history.to_vec() }
    }

    pub fn cards(&self) -> [u8; 2] {
        self.cards
    }

    pub fn history(&self) -> &[Action] {
        &self.history
    }

    fn history_letters(&self) -> String {
        self.history
            .iter()
            .map(|a| if *a == Action::Pass { 'p' } else { 'b' })
            .collect()
    }

    pub(super) fn to_move(&self) -> ToMove {
        match self.history_letters().as_str() {
            "pp" | "bp" | "bb" | "pbp" | "pbb" => ToMove::Terminal,
            h => ToMove::Player(h.len() % 2),
        }
    }

    pub(super) fn apply(&mut self, action: Action) {
        self.history.push(action);
    }

    /// Chips each player has put in.
    pub fn pot_contributions(&self) -> [u32; 2] {
        let mut pot = [1, 1];
        for (i, a) in self.history.iter().enumerate() {
            if *a == Action::Bet {
                pot[i % 2] += 1;
            }
        }
        pot
    }

    pub(super) fn returns(&self) -> Option<[f64; 2]> {
        let showdown = |stake: f64| {
            if self.cards[0] > self.cards[1] {
                [stake, -stake]
            } else {
                [-stake, stake]
            }
        };
        let r = match self.history_letters().as_str() {
            "pp" => showdown(1.0),
            "bb" | "pbb" => showdown(2.0),
            "bp" => [1.0, -1.0],
            "pbp" => [-1.0, 1.0],
            _ => return None,
        };
        Some(r)
    }

    pub(super) fn info_key(&self, player: usize) -> String {
        format!("{}{}", self.cards[player], self.history_letters())
    }

    pub(super) fn public_key(&self) -> String {
        format!("?{}", self.history_letters())
    }

    pub(super) fn featurize(&self, player: usize, out: &mut [f64]) {
        out[usize::from(self.cards[player])] = 1.0;
        let h = self.history_letters();
        if let Some(i) = DECISION_HISTORIES.iter().position(|d| *d == h) {
            out[3 + i] = 1.0;
        }
    }
}

pub(super) fn enumerate_p0_keys() -> BTreeSet<String> {
    fn walk(s: &KuhnState, keys: &mut BTreeSet<String>) {
        match s.to_move() {
            ToMove::Terminal => {}
            ToMove::Player(p) => {
                if p == 0 {
                    keys.insert(s.info_key(0));
                }
                for a in [Action::Pass, Action::Bet] {
                    let mut next = s.clone();
                    next.apply(a);
                    walk(&next, keys);
                }
            }
        }
    }
    let mut keys = BTreeSet::new();
    for c0 in 0..3 {
        for c1 in (0..3).filter(|c| *c != c0) {
            walk(&KuhnState::from_parts([c0, c1], &[]), &mut keys);
        }
    }
    keys
}

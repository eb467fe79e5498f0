//! Tabular victims: Q-learning, PPO over a preference table, and NFSP.
//!
//! All three act only over the retained set the harness hands them, so a
//! removed action never receives probability mass.

mod nfsp;
mod ppo;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{argmax_action, ActMode, Agent, Observation, SimRng};
use crate::game::{Action, ActionSet};

pub use nfsp::{NfspLearner, NfspState};
pub use ppo::{PpoLearner, PpoParams, PreferenceTable};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Action values at one information state, indexed by action slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    legal: ActionSet,
    values: [f64; 5],
}

impl QRow {
    fn new(legal: ActionSet) -> Self {
        QRow { legal, values: [0.0; 5] }
    }

    pub fn legal(&self) -> ActionSet {
        self.legal
    }

    pub fn get(&self, a: Action) -> f64 {
        self.values[a.slot()]
    }

    /// Greedy action over the legal set, lowest action on ties.
    pub fn greedy(&self) -> Option<Action> {
        argmax_action(self.legal, |a| self.get(a))
    }

    /// Best value minus second-best value over the legal set.
    pub fn top_gap(&self) -> f64 {
        let mut v: Vec<f64> = self.legal.iter().map(|a| self.get(a)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        match v.as_slice() {
            [a, b, ..] => a - b,
            _ => 0.0,
        }
    }
}

/// One Q-learning transition between two of the learner's own decisions.
#[derive(Clone, Debug)]
pub struct Transition<'a> {
    pub key: &'a str,
    pub action: Action,
    pub reward: f64,
    /// `None` when the episode ended after this decision.
    pub next: Option<(&'a str, ActionSet)>,
}

/// Q-values keyed by information state. Unseen entries read as 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QTable {
    rows: BTreeMap<String, QRow>,
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(alpha: f64, epsilon: f64, gamma: f64) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
        assert!((0.0..=1.0).contains(&epsilon), "epsilon must be in [0, 1]");
        assert!(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
        QTable { rows: BTreeMap::new(), alpha, epsilon, gamma }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &str, a: Action) -> f64 {
        self.rows.get(key).map_or(0.0, |r| r.get(a))
    }

    pub fn row(&self, key: &str) -> Option<&QRow> {
        self.rows.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &QRow)> {
        self.rows.iter().map(|(k, r)| (k.as_str(), r))
    }

    fn row_mut(&mut self, key: &str, legal: ActionSet) -> &mut QRow {
        if !self.rows.contains_key(key) {
            self.rows.insert(key.to_string(), QRow::new(legal));
        }
        let row = self.rows.get_mut(key).expect("just inserted");
        row.legal = row.legal.union(legal);
        row
    }

    /// Record the legal set of a state without changing its values.
    pub fn touch(&mut self, key: &str, legal: ActionSet) {
        self.row_mut(key, legal);
    }

    pub fn set(&mut self, key: &str, legal: ActionSet, a: Action, v: f64) {
        self.row_mut(key, legal.with(a)).values[a.slot()] = v;
    }

    pub fn max_over(&self, key: &str, set: ActionSet) -> f64 {
        set.iter().map(|a| self.get(key, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, key: &str, retained: ActionSet) -> Action {
        argmax_action(retained, |a| self.get(key, a)).expect("retained set is non-empty")
    }

    /// ε-greedy choice restricted to `retained`.
    pub fn act<R: Rng + ?Sized>(&self, key: &str, retained: ActionSet, explore: bool, rng: &mut R) -> Action {
        if retained.len() == 1 {
            return retained.first().expect("non-empty");
        }
        if explore && rng.random::<f64>() < self.epsilon {
            retained.choose(rng).expect("non-empty")
        } else {
            self.greedy(key, retained)
        }
    }

    /// `Q <- Q + α (r + γ max_{a' ∈ next retained} Q(next, a') - Q)`.
    pub fn update(&mut self, t: &Transition<'_>) {
        let bootstrap = match t.next {
            Some((next, retained)) => self.gamma * self.max_over(next, retained),
            None => 0.0,
        };
        let alpha = self.alpha;
        let row = self.row_mut(t.key, ActionSet::EMPTY.with(t.action));
        let q = &mut row.values[t.action.slot()];
        *q += alpha * (t.reward + bootstrap - *q);
    }

    /// Plain-text form: `key<TAB>ACTION<TAB>value` per legal (state, action).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TableError> {
        writeln!(w, "# q-table alpha={} epsilon={} gamma={}", self.alpha, self.epsilon, self.gamma)?;
        for (k, row) in &self.rows {
            for a in row.legal.iter() {
                writeln!(w, "{k}\t{a}\t{}", row.get(a))?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R, alpha: f64, epsilon: f64, gamma: f64) -> Result<Self, TableError> {
        let mut q = QTable::new(alpha, epsilon, gamma);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let err = |message: String| TableError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, action, value] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let a = action.parse::<Action>().map_err(err)?;
            let v = value.parse::<f64>().map_err(|e| err(e.to_string()))?;
            q.set(key, ActionSet::EMPTY.with(a), a, v);
        }
        Ok(q)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Step {
    pub key: String,
    pub retained: ActionSet,
    pub action: Action,
}

/// Replay one seat's decisions as Q-learning transitions: reward 0 between
/// decisions, the final return after the last one.
pub(crate) fn learn_trajectory(q: &mut QTable, steps: &[Step], ret: f64) {
    for (i, s) in steps.iter().enumerate() {
        let next = steps.get(i + 1).map(|n| (n.key.as_str(), n.retained));
        let reward = if next.is_none() { ret } else { 0.0 };
        q.update(&Transition { key: &s.key, action: s.action, reward, next });
    }
}

/// ε-greedy tabular Q-learning victim.
#[derive(Clone, Debug)]
pub struct QLearner {
    pub q: QTable,
    trajectories: [Vec<Step>; 2],
}

impl QLearner {
    pub fn new(alpha: f64, epsilon: f64, gamma: f64) -> Self {
        QLearner { q: QTable::new(alpha, epsilon, gamma), trajectories: Default::default() }
    }

    pub fn from_table(q: QTable) -> Self {
        QLearner { q, trajectories: Default::default() }
    }
}

impl Agent for QLearner {
    fn name(&self) -> &'static str {
        "ql"
    }

    fn act(&mut self, seat: usize, obs: &Observation<'_>, retained: ActionSet, mode: ActMode, rng: &mut SimRng) -> Action {
        let key = obs.key();
        let action = self.q.act(key, retained, mode == ActMode::Train, rng);
        if mode == ActMode::Train {
            self.q.touch(key, obs.legal());
            self.trajectories[seat].push(Step { key: key.to_string(), retained, action });
        }
        action
    }

    fn end_episode(&mut self, seat: usize, ret: f64, mode: ActMode, _rng: &mut SimRng) {
        let steps = std::mem::take(&mut self.trajectories[seat]);
        if mode == ActMode::Train {
            learn_trajectory(&mut self.q, &steps, ret);
        }
    }

    fn action_values(&self, obs: &Observation<'_>) -> Option<Vec<(Action, f64)>> {
        Some(obs.legal().iter().map(|a| (a, self.q.get(obs.key(), a))).collect())
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const PB: [Action; 2] = [Action::Pass, Action::Bet];

    #[test]
    fn singleton_is_forced() {
        let mut q = QTable::new(0.1, 1.0, 1.0);
        q.set("2", ActionSet::of(&PB), Action::Bet, 5.0);
        let mut rng = SimRng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(q.act("2", ActionSet::of(&[Action::Pass]), true, &mut rng), Action::Pass);
        }
    }

    #[test]
    fn greedy_picks_argmax_and_ties_low() {
        let mut q = QTable::new(0.1, 0.0, 1.0);
        let mut rng = SimRng::seed_from_u64(0);
        assert_eq!(q.act("2", ActionSet::of(&PB), true, &mut rng), Action::Pass);
        q.set("2", ActionSet::of(&PB), Action::Bet, 1.0);
        assert_eq!(q.act("2", ActionSet::of(&PB), true, &mut rng), Action::Bet);
        // Masked argmax: best action removed.
        assert_eq!(q.act("2", ActionSet::of(&[Action::Pass]), true, &mut rng), Action::Pass);
    }

    #[test]
    fn full_exploration_is_uniform_within_three_sigma() {
        let q = QTable::new(0.1, 1.0, 1.0);
        let mut rng = SimRng::seed_from_u64(11);
        let n = 10_000;
        let legal = ActionSet::of(&[Action::Fold, Action::Call, Action::Raise]);
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[q.act("k", legal, true, &mut rng).slot()] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn terminal_update_arithmetic() {
        let mut q = QTable::new(0.1, 0.0, 1.0);
        q.update(&Transition { key: "0", action: Action::Bet, reward: 1.0, next: None });
        assert!((q.get("0", Action::Bet) - 0.1).abs() < 1e-15);
        let mut z = QTable::new(0.1, 0.0, 1.0);
        z.update(&Transition { key: "0", action: Action::Bet, reward: 0.0, next: Some(("0pb", ActionSet::of(&PB))) });
        assert_eq!(z.get("0", Action::Bet), 0.0);
    }

    #[test]
    fn repeated_terminal_updates_follow_closed_form() {
        let alpha = 0.1;
        let mut q = QTable::new(alpha, 0.0, 1.0);
        for n in 1..=50 {
            q.update(&Transition { key: "s", action: Action::Pass, reward: 1.0, next: None });
            let expected = 1.0 - (1.0f64 - alpha).powi(n);
            assert!((q.get("s", Action::Pass) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_uses_next_retained_only() {
        let mut q = QTable::new(0.5, 0.0, 1.0);
        q.set("n", ActionSet::of(&PB), Action::Bet, 4.0);
        q.set("n", ActionSet::of(&PB), Action::Pass, 2.0);
        q.update(&Transition { key: "s", action: Action::Pass, reward: 0.0, next: Some(("n", ActionSet::of(&[Action::Pass]))) });
        assert_eq!(q.get("s", Action::Pass), 1.0);
    }

    #[test]
    fn table_file_round_trip() {
        let mut q = QTable::new(0.1, 0.15, 1.0);
        q.set("0pb", ActionSet::of(&PB), Action::Pass, -1.0);
        q.set("0pb", ActionSet::of(&PB), Action::Bet, -1.75);
        let mut buf = Vec::new();
        q.write_to(&mut buf).unwrap();
        let back = QTable::read_from(buf.as_slice(), 0.1, 0.15, 1.0).unwrap();
        assert_eq!(back.get("0pb", Action::Bet), -1.75);
        assert_eq!(back.row("0pb").unwrap().legal(), ActionSet::of(&PB));
        assert!(QTable::read_from("a\tb\n".as_bytes(), 0.1, 0.1, 1.0).is_err());
    }

    #[test]
    fn top_gap() {
        let mut q = QTable::new(0.1, 0.0, 1.0);
        q.set("x", ActionSet::of(&PB), Action::Pass, 0.25);
        q.set("x", ActionSet::of(&PB), Action::Bet, -0.5);
        assert_eq!(q.row("x").unwrap().top_gap(), 0.75);
    }
}

//! Action-removal masks for player 0.
//!
//! A [`MaskTable`] removes at most one action per information state. Masks
//! never empty a legal set: if a removal would leave nothing, the original
//! legal set is kept.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Observation, SimRng};
use crate::game::{Action, ActionSet};
use crate::tabular::QTable;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask support would exceed budget {budget}")]
    BudgetExceeded { budget: usize },
    #[error("need {needed} seen states to match the reference support, only {available} available")]
    TooFewStates { needed: usize, available: usize },
    #[error("visit log is empty")]
    EmptyLog,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub removed: Action,
    pub confidence: f64,
}

/// Per-state removals, with an optional support budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskTable {
    entries: BTreeMap<String, MaskEntry>,
    budget: Option<usize>,
}

impl MaskTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_budget(k: usize) -> Self {
        MaskTable { entries: BTreeMap::new(), budget: Some(k) }
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    /// Set or replace the removal at `key`.
    pub fn insert(&mut self, key: impl Into<String>, removed: Action, confidence: f64) -> Result<(), MaskError> {
        let key = key.into();
        if let Some(k) = self.budget {
            if !self.entries.contains_key(&key) && self.entries.len() >= k {
                return Err(MaskError::BudgetExceeded { budget: k });
            }
        }
        self.entries.insert(key, MaskEntry { removed, confidence });
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&MaskEntry> {
        self.entries.get(key)
    }

    pub fn support(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &MaskEntry)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e))
    }

    pub fn apply(&self, key: &str, legal: ActionSet) -> ActionSet {
        match self.entries.get(key) {
            Some(e) => remove_keeping_nonempty(legal, e.removed),
            None => legal,
        }
    }

    /// Plain-text form: one `key<TAB>ACTION<TAB>confidence` line per state.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), MaskError> {
        match self.budget {
            Some(k) => writeln!(w, "# mask-table budget={k}")?,
            None => writeln!(w, "# mask-table")?,
        }
        for (key, e) in &self.entries {
            writeln!(w, "{key}\t{}\t{}", e.removed, e.confidence)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, MaskError> {
        let mut table = MaskTable::new();
        let mut budget = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let parse_err = |message: String| MaskError::Parse { line: i + 1, message };
            if let Some(header) = line.strip_prefix('#') {
                if let Some(b) = header.trim().strip_prefix("mask-table budget=") {
                    budget = Some(b.parse::<usize>().map_err(|e| parse_err(e.to_string()))?);
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, action, confidence] = fields[..] else {
                return Err(parse_err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let removed = action.parse::<Action>().map_err(parse_err)?;
            let confidence = confidence.parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
            table.entries.insert(key.to_string(), MaskEntry { removed, confidence });
        }
        if let Some(k) = budget {
            if table.entries.len() > k {
                return Err(MaskError::BudgetExceeded { budget: k });
            }
        }
        table.budget = budget;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), MaskError> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, MaskError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn remove_keeping_nonempty(legal: ActionSet, a: Action) -> ActionSet {
    let kept = legal.without(a);
    if kept.is_empty() {
        legal
    } else {
        kept
    }
}

/// The non-learned masking strategies. Learned adversaries plug in through
/// [`ActionFilter`] directly.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskStrategy {
    None,
    /// Remove each legal action independently with probability `p`, redrawn
    /// at every visit.
    Random { p: f64 },
    /// Always remove this action where it is legal.
    Fixed(Action),
    /// Persistent per-state removals (value heuristic, matched-L0, transfer, ...).
    Table(MaskTable),
}

pub fn apply_mask<R: Rng + ?Sized>(strategy: &MaskStrategy, key: &str, legal: ActionSet, rng: &mut R) -> ActionSet {
    match strategy {
        MaskStrategy::None => legal,
        MaskStrategy::Random { p } => {
            let kept: ActionSet = legal.iter().filter(|_| rng.random::<f64>() >= *p).collect();
            if kept.is_empty() {
                legal
            } else {
                kept
            }
        }
        MaskStrategy::Fixed(a) => remove_keeping_nonempty(legal, *a),
        MaskStrategy::Table(t) => t.apply(key, legal),
    }
}

/// Anything that decides player 0's retained set at a decision point.
pub trait ActionFilter {
    fn retained(&mut self, obs: &Observation<'_>, rng: &mut SimRng) -> ActionSet;

    /// The action actually executed after player 0 chose `chosen`.
    fn replace(&mut self, _obs: &Observation<'_>, chosen: Action, _rng: &mut SimRng) -> Action {
        chosen
    }

    /// Player 0's return at the end of each episode.
    fn end_episode(&mut self, _p0_return: f64) {}
}

impl ActionFilter for MaskStrategy {
    fn retained(&mut self, obs: &Observation<'_>, rng: &mut SimRng) -> ActionSet {
        match self {
            MaskStrategy::None => obs.legal(),
            _ => apply_mask(self, obs.key(), obs.legal(), rng),
        }
    }
}

/// Remove at the `k` states with the largest `max_a |Q(h,a)|`, taking away
/// the greedy action there. Ties go to the lexicographically smaller key.
pub fn value_heuristic_mask(q: &QTable, k: usize) -> MaskTable {
    let mut scored: Vec<(&str, f64, Action)> = q
        .iter()
        .filter_map(|(key, row)| {
            let best = row.greedy()?;
            let score = row.legal().iter().map(|a| row.get(a).abs()).fold(0.0, f64::max);
            Some((key, score, best))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut mask = MaskTable::with_budget(k);
    for (key, score, best) in scored.into_iter().take(k) {
        mask.insert(key, best, score).expect("within budget");
    }
    mask
}

/// Random persistent mask with exactly the reference's support size, drawn
/// uniformly from `seen` (key, legal set) pairs.
pub fn matched_random<R: Rng + ?Sized>(
    reference: &MaskTable,
    seen: &[(String, ActionSet)],
    rng: &mut R,
) -> Result<MaskTable, MaskError> {
    let k = reference.support_size();
    let eligible: Vec<&(String, ActionSet)> = seen.iter().filter(|(_, legal)| legal.len() > 1).collect();
    if eligible.len() < k {
        return Err(MaskError::TooFewStates { needed: k, available: eligible.len() });
    }
    let mut mask = MaskTable::with_budget(k);
    for i in index::sample(rng, eligible.len(), k) {
        let (key, legal) = eligible[i];
        let removed = legal.choose(rng).expect("non-empty legal set");
        mask.insert(key.clone(), removed, 0.0)?;
    }
    Ok(mask)
}

/// One player-0 decision as seen by the harness.
#[derive(Clone, Debug, PartialEq)]
pub struct Visit {
    pub key: String,
    pub legal: ActionSet,
    pub retained: ActionSet,
}

#[derive(Clone, Debug, Default)]
pub struct VisitLog {
    pub visits: Vec<Visit>,
    pub episodes: usize,
}

impl VisitLog {
    pub fn record(&mut self, key: &str, legal: ActionSet, retained: ActionSet) {
        self.visits.push(Visit { key: key.to_string(), legal, retained });
    }

    /// Distinct seen states with their legal sets.
    pub fn seen_states(&self) -> Vec<(String, ActionSet)> {
        let mut seen: BTreeMap<&str, ActionSet> = BTreeMap::new();
        for v in &self.visits {
            seen.entry(&v.key).or_insert(v.legal);
        }
        seen.into_iter().map(|(k, l)| (k.to_string(), l)).collect()
    }

    /// Diagnostics from what was actually retained at each visit; suits
    /// per-visit strategies such as `Random(p)`.
    pub fn observed_diagnostics(&self) -> Result<MaskDiagnostics, MaskError> {
        if self.visits.is_empty() {
            return Err(MaskError::EmptyLog);
        }
        let mut per_state: HashMap<&str, bool> = HashMap::new();
        let mut masked_visits = 0usize;
        for v in &self.visits {
            let masked = v.retained != v.legal;
            masked_visits += usize::from(masked);
            *per_state.entry(&v.key).or_insert(false) |= masked;
        }
        Ok(MaskDiagnostics {
            masked_states: per_state.values().filter(|m| **m).count(),
            seen_states: per_state.len(),
            decision_mask_rate: masked_visits as f64 / self.visits.len() as f64,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskDiagnostics {
    pub masked_states: usize,
    pub seen_states: usize,
    pub decision_mask_rate: f64,
}

/// Effective support of `mask` over the logged visits.
pub fn diagnostics(mask: &MaskTable, log: &VisitLog) -> Result<MaskDiagnostics, MaskError> {
    if log.visits.is_empty() {
        return Err(MaskError::EmptyLog);
    }
    let mut per_state: HashMap<&str, bool> = HashMap::new();
    let mut masked_visits = 0usize;
    for v in &log.visits {
        let masked = mask.apply(&v.key, v.legal) != v.legal;
        masked_visits += usize::from(masked);
        per_state.insert(&v.key, masked);
    }
    Ok(MaskDiagnostics {
        masked_states: per_state.values().filter(|m| **m).count(),
        seen_states: per_state.len(),
        decision_mask_rate: masked_visits as f64 / log.visits.len() as f64,
    })
}

/// Human-readable dump used in run records.
pub fn describe(mask: &MaskTable) -> String {
    let mut out = String::new();
    for (k, e) in mask.iter() {
        let _ = writeln!(out, "{k}: -{} ({:.3})", e.removed, e.confidence);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const PB: [Action; 2] = [Action::Pass, Action::Bet];

    #[test]
    fn none_is_identity() {
        let mut rng = SimRng::seed_from_u64(0);
        let legal = ActionSet::of(&PB);
        assert_eq!(apply_mask(&MaskStrategy::None, "0", legal, &mut rng), legal);
    }

    #[test]
    fn fixed_removes_where_legal() {
        let mut rng = SimRng::seed_from_u64(0);
        let legal = ActionSet::of(&[Action::Fold, Action::Call, Action::Raise]);
        assert_eq!(
            apply_mask(&MaskStrategy::Fixed(Action::Raise), "x", legal, &mut rng),
            ActionSet::of(&[Action::Fold, Action::Call])
        );
        let single = ActionSet::of(&[Action::Raise]);
        assert_eq!(apply_mask(&MaskStrategy::Fixed(Action::Raise), "x", single, &mut rng), single);
    }

    #[test]
    fn table_lookup() {
        let mut rng = SimRng::seed_from_u64(0);
        let mut t = MaskTable::new();
        t.insert("0pb", Action::Pass, 0.49).unwrap();
        let s = MaskStrategy::Table(t);
        assert_eq!(apply_mask(&s, "0pb", ActionSet::of(&PB), &mut rng), ActionSet::of(&[Action::Bet]));
        assert_eq!(apply_mask(&s, "1pb", ActionSet::of(&PB), &mut rng), ActionSet::of(&PB));
    }

    #[test]
    fn random_p1_keeps_legal_set() {
        let mut rng = SimRng::seed_from_u64(0);
        let legal = ActionSet::of(&PB);
        assert_eq!(apply_mask(&MaskStrategy::Random { p: 1.0 }, "0", legal, &mut rng), legal);
        assert_eq!(apply_mask(&MaskStrategy::Random { p: 0.0 }, "0", legal, &mut rng), legal);
    }

    #[test]
    fn random_removal_rate() {
        let mut rng = SimRng::seed_from_u64(4);
        let legal = ActionSet::of(&[Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay]);
        let n = 20_000;
        let removed: usize = (0..n)
            .map(|_| legal.len() - apply_mask(&MaskStrategy::Random { p: 0.3 }, "", legal, &mut rng).len())
            .sum();
        let rate = removed as f64 / (5 * n) as f64;
        assert!((rate - 0.3).abs() < 0.01, "{rate}");
    }

    #[test]
    fn budget_is_enforced() {
        let mut t = MaskTable::with_budget(1);
        t.insert("a", Action::Pass, 0.0).unwrap();
        t.insert("a", Action::Bet, 0.0).unwrap();
        assert!(matches!(t.insert("b", Action::Pass, 0.0), Err(MaskError::BudgetExceeded { budget: 1 })));
    }

    #[test]
    fn file_round_trip_and_errors() {
        let mut t = MaskTable::with_budget(3);
        t.insert("0pb", Action::Pass, 0.49).unwrap();
        t.insert("2", Action::Bet, 0.48).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = MaskTable::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert!(matches!(
            MaskTable::read_from("0pb\tJUMP\t0.1\n".as_bytes()),
            Err(MaskError::Parse { line: 1, .. })
        ));
        assert!(matches!(MaskTable::read_from("0pb PASS\n".as_bytes()), Err(MaskError::Parse { .. })));
    }

    fn qtable(rows: &[(&str, [f64; 2])]) -> QTable {
        let mut q = QTable::new(0.1, 0.0, 1.0);
        for (k, v) in rows {
            q.set(k, ActionSet::of(&PB), Action::Pass, v[0]);
            q.set(k, ActionSet::of(&PB), Action::Bet, v[1]);
        }
        q
    }

    #[test]
    fn value_heuristic_ties_are_lexicographic() {
        let q = qtable(&[("2", [0.0, 0.0]), ("0", [0.0, 0.0]), ("1", [0.0, 0.0])]);
        let m = value_heuristic_mask(&q, 2);
        assert_eq!(m.support().collect::<Vec<_>>(), vec!["0", "1"]);
        assert_eq!(m.get("0").unwrap().removed, Action::Pass);
    }

    #[test]
    fn value_heuristic_picks_dominant_state() {
        let q = qtable(&[("0", [0.1, -0.2]), ("2pb", [-1.0, 1.9]), ("1", [0.3, 0.0])]);
        let m = value_heuristic_mask(&q, 1);
        assert_eq!(m.support().collect::<Vec<_>>(), vec!["2pb"]);
        assert_eq!(m.get("2pb").unwrap().removed, Action::Bet);
        // More budget than states masks everything known.
        assert_eq!(value_heuristic_mask(&q, 10).support_size(), 3);
    }

    #[test]
    fn matched_random_matches_support() {
        let seen: Vec<(String, ActionSet)> = (0..100).map(|i| (format!("s{i}"), ActionSet::of(&PB))).collect();
        let mut reference = MaskTable::new();
        for i in 0..64 {
            reference.insert(format!("r{i}"), Action::Pass, 1.0).unwrap();
        }
        let a = matched_random(&reference, &seen, &mut SimRng::seed_from_u64(7)).unwrap();
        let b = matched_random(&reference, &seen, &mut SimRng::seed_from_u64(7)).unwrap();
        assert_eq!(a.support_size(), 64);
        assert_eq!(a, b);
        let empty = matched_random(&MaskTable::new(), &seen, &mut SimRng::seed_from_u64(1)).unwrap();
        assert!(empty.is_empty());
        assert!(matches!(
            matched_random(&reference, &seen[..10], &mut SimRng::seed_from_u64(1)),
            Err(MaskError::TooFewStates { needed: 64, available: 10 })
        ));
    }

    #[test]
    fn diagnostics_counts() {
        let legal = ActionSet::of(&PB);
        let mut log = VisitLog::default();
        for k in ["0", "0pb", "1", "0", "2"] {
            log.record(k, legal, legal);
        }
        let empty = diagnostics(&MaskTable::new(), &log).unwrap();
        assert_eq!(empty, MaskDiagnostics { masked_states: 0, seen_states: 4, decision_mask_rate: 0.0 });
        let mut m = MaskTable::new();
        m.insert("0", Action::Bet, 0.0).unwrap();
        let d = diagnostics(&m, &log).unwrap();
        assert_eq!(d.masked_states, 1);
        // "0" is 2 of the 5 logged decisions.
        assert!((d.decision_mask_rate - 0.4).abs() < 1e-12);
        assert!(matches!(diagnostics(&m, &VisitLog::default()), Err(MaskError::EmptyLog)));
    }
}

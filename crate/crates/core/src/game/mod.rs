//! Two-player zero-sum environments behind one interface.
//!
//! Every game resolves its chance events (card deals, spawn cells) when the
//! episode is created, from a dedicated chance stream, so that exploration
//! noise elsewhere in a run never changes which deals are seen. States are
//! plain values; advancing one never touches shared data.

mod kuhn;
mod leduc;
mod pursuit;
mod resource;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::NormBounds;

pub use kuhn::KuhnState;
pub use leduc::LeducState;
pub use pursuit::PursuitState;
pub use resource::ResourceState;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),
    #[error("state is terminal")]
    Terminal,
    #[error("action {action} is not legal here (legal: {legal})")]
    IllegalAction { action: Action, legal: ActionSet },
    #[error("information states of {0:?} are not enumerable a priori")]
    NotEnumerable(GameKind),
}

/// All actions of all games. Within one game, declaration order is the
/// per-game action index order, which is also the tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Pass,
    Bet,
    Fold,
    Call,
    Raise,
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 10] = [
        Action::Pass,
        Action::Bet,
        Action::Fold,
        Action::Call,
        Action::Raise,
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    /// Index of the action inside its own game's action list.
    pub fn slot(self) -> usize {
        match self {
            Action::Pass | Action::Fold | Action::Up => 0,
            Action::Bet | Action::Call | Action::Down => 1,
            Action::Raise | Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Pass => "PASS",
            Action::Bet => "BET",
            Action::Fold => "FOLD",
            Action::Call => "CALL",
            Action::Raise => "RAISE",
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
            Action::Stay => "STAY",
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Small ordered set of actions, stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSet(u16);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn of(actions: &[Action]) -> Self {
        actions.iter().fold(Self::EMPTY, |s, &a| s.with(a))
    }

    pub fn with(self, a: Action) -> Self {
        ActionSet(self.0 | a.bit())
    }

    pub fn without(self, a: Action) -> Self {
        ActionSet(self.0 & !a.bit())
    }

    pub fn insert(&mut self, a: Action) {
        self.0 |= a.bit();
    }

    pub fn remove(&mut self, a: Action) {
        self.0 &= !a.bit();
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & a.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ActionSet) -> ActionSet {
        ActionSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: ActionSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Lowest-ordered action.
    pub fn first(self) -> Option<Action> {
        self.iter().next()
    }

    /// The `i`-th action in order.
    pub fn nth(self, i: usize) -> Option<Action> {
        self.iter().nth(i)
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    pub fn choose<R: Rng + ?Sized>(self, rng: &mut R) -> Option<Action> {
        if self.is_empty() {
            return None;
        }
        self.nth(rng.random_range(0..self.len()))
    }
}

impl fmt::Debug for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(Action::name).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        iter.into_iter().fold(ActionSet::EMPTY, ActionSet::with)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameKind {
    Kuhn,
    Leduc,
    Gridworld,
    ResourceGrid,
}

/// Leduc-style betting structure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetSchedule {
    pub ante: u32,
    pub round_bets: [u32; 2],
    pub max_raises: u32,
}

impl BetSchedule {
    /// Largest amount one player can lose in a single hand.
    pub fn max_loss(&self) -> u32 {
        self.ante + self.max_raises * (self.round_bets[0] + self.round_bets[1])
    }

    /// Default schedule for `ranks` ranks: round-2 bets of 4/6/8/18 for
    /// 3/5/10/20 ranks reproduce the 13/17/21/41 single-hand loss bounds.
    pub fn for_ranks(ranks: u32) -> Self {
        let second = match ranks {
            5 => 6,
            10 => 8,
            20 => 18,
            _ => 4,
        };
        BetSchedule { ante: 1, round_bets: [2, second], max_raises: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub kind: GameKind,
    /// Leduc only.
    pub rank_count: u32,
    /// Leduc only.
    pub bets: BetSchedule,
    /// Grid games only.
    pub grid_size: usize,
    /// Grid games only; counts individual moves.
    pub max_steps: u32,
    /// Resource grid only.
    pub resource_count: usize,
    pub reward_bounds: NormBounds,
}

impl GameSpec {
    pub fn kuhn() -> Self {
        GameSpec {
            kind: GameKind::Kuhn,
            rank_count: 3,
            bets: BetSchedule { ante: 1, round_bets: [1, 0], max_raises: 1 },
            grid_size: 0,
            max_steps: 0,
            resource_count: 0,
            reward_bounds: NormBounds::new(-2.0, 2.0),
        }
    }

    pub fn leduc(ranks: u32) -> Self {
        let bets = BetSchedule::for_ranks(ranks);
        let bound = f64::from(bets.max_loss());
        GameSpec {
            kind: GameKind::Leduc,
            rank_count: ranks,
            bets,
            grid_size: 0,
            max_steps: 0,
            resource_count: 0,
            reward_bounds: NormBounds::new(-bound, bound),
        }
    }

    pub fn gridworld() -> Self {
        GameSpec {
            kind: GameKind::Gridworld,
            rank_count: 0,
            bets: BetSchedule { ante: 0, round_bets: [0, 0], max_raises: 0 },
            grid_size: 5,
            max_steps: 30,
            resource_count: 0,
            reward_bounds: NormBounds::new(-1.0, 1.0),
        }
    }

    pub fn resource_grid() -> Self {
        GameSpec {
            kind: GameKind::ResourceGrid,
            rank_count: 0,
            bets: BetSchedule { ante: 0, round_bets: [0, 0], max_raises: 0 },
            grid_size: 4,
            max_steps: 40,
            resource_count: 4,
            reward_bounds: NormBounds::new(-4.0, 4.0),
        }
    }

    /// Parse a short game name: `kuhn`, `leduc`, `leduc-5`, `gridworld`, `resource`.
    pub fn by_name(name: &str) -> Result<Self, GameError> {
        match name {
            "kuhn" => Ok(Self::kuhn()),
            "leduc" => Ok(Self::leduc(3)),
            "gridworld" => Ok(Self::gridworld()),
            "resource" => Ok(Self::resource_grid()),
            other => {
                let ranks = other
                    .strip_prefix("leduc-")
                    .and_then(|n| n.parse::<u32>().ok())
                    .ok_or_else(|| GameError::InvalidSpec(format!("unknown game `{other}`")))?;
                let spec = Self::leduc(ranks);
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            GameKind::Kuhn => "kuhn".into(),
            GameKind::Leduc if self.rank_count == 3 => "leduc".into(),
            GameKind::Leduc => format!("leduc-{}", self.rank_count),
            GameKind::Gridworld => "gridworld".into(),
            GameKind::ResourceGrid => "resource".into(),
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: &str| Err(GameError::InvalidSpec(m.to_string()));
        if !(self.reward_bounds.r_min < self.reward_bounds.r_max) {
            return bad("reward bounds need r_min < r_max");
        }
        match self.kind {
            GameKind::Kuhn => {
                if self.rank_count != 3 {
                    return bad("Kuhn poker uses exactly 3 cards");
                }
            }
            GameKind::Leduc => {
                if self.rank_count < 2 {
                    return bad("Leduc needs at least 2 ranks");
                }
                if self.bets.ante == 0 || self.bets.round_bets.contains(&0) {
                    return bad("bet sizes must be positive");
                }
                let loss = f64::from(self.bets.max_loss());
                if self.rank_count == 3 && loss != 13.0 {
                    return bad("standard Leduc schedule must have max single-hand loss 13");
                }
                if loss > self.reward_bounds.r_max || -loss < self.reward_bounds.r_min {
                    return bad("bet schedule exceeds the reward bounds");
                }
            }
            GameKind::Gridworld => {
                if self.grid_size < 2 || self.max_steps == 0 {
                    return bad("grid needs size >= 2 and a positive step limit");
                }
            }
            GameKind::ResourceGrid => {
                if self.grid_size < 2 || self.max_steps == 0 {
                    return bad("grid needs size >= 2 and a positive step limit");
                }
                if self.resource_count == 0 || self.resource_count + 2 > self.grid_size * self.grid_size {
                    return bad("resources must fit on the board next to both agents");
                }
                if self.resource_count as f64 > self.reward_bounds.r_max {
                    return bad("resource count exceeds the reward bounds");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToMove {
    Player(usize),
    Terminal,
}

/// A live game position.
#[derive(Clone, Debug, PartialEq)]
pub enum EpisodeState {
    Kuhn(KuhnState),
    Leduc(LeducState),
    Pursuit(PursuitState),
    Resource(ResourceState),
}

impl EpisodeState {
    pub fn to_move(&self) -> ToMove {
        match self {
            EpisodeState::Kuhn(s) => s.to_move(),
            EpisodeState::Leduc(s) => s.to_move(),
            EpisodeState::Pursuit(s) => s.to_move(),
            EpisodeState::Resource(s) => s.to_move(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.to_move() == ToMove::Terminal
    }

    /// Zero-sum returns, once the episode is over.
    pub fn returns(&self) -> Option<[f64; 2]> {
        match self {
            EpisodeState::Kuhn(s) => s.returns(),
            EpisodeState::Leduc(s) => s.returns(),
            EpisodeState::Pursuit(s) => s.returns(),
            EpisodeState::Resource(s) => s.returns(),
        }
    }

    pub fn history(&self) -> Vec<Action> {
        match self {
            EpisodeState::Kuhn(s) => s.history().to_vec(),
            EpisodeState::Leduc(s) => s.history(),
            EpisodeState::Pursuit(s) => s.history().to_vec(),
            EpisodeState::Resource(s) => s.history().to_vec(),
        }
    }
}

/// A game built from a validated spec.
#[derive(Clone, Debug)]
pub struct Game {
    spec: GameSpec,
}

impl Game {
    pub fn new(spec: GameSpec) -> Result<Self, GameError> {
        spec.validate()?;
        Ok(Game { spec })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn kind(&self) -> GameKind {
        self.spec.kind
    }

    pub fn num_actions(&self) -> usize {
        self.all_actions().len()
    }

    /// The game's full action list, indexed by [`Action::slot`].
    pub fn all_actions(&self) -> ActionSet {
        match self.spec.kind {
            GameKind::Kuhn => ActionSet::of(&[Action::Pass, Action::Bet]),
            GameKind::Leduc => ActionSet::of(&[Action::Fold, Action::Call, Action::Raise]),
            GameKind::Gridworld => pursuit::ACTIONS,
            GameKind::ResourceGrid => resource::ACTIONS,
        }
    }

    pub fn action_at(&self, slot: usize) -> Option<Action> {
        self.all_actions().nth(slot)
    }

    pub fn new_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> EpisodeState {
        match self.spec.kind {
            GameKind::Kuhn => EpisodeState::Kuhn(KuhnState::deal(rng)),
            GameKind::Leduc => EpisodeState::Leduc(LeducState::deal(&self.spec, rng)),
            GameKind::Gridworld => EpisodeState::Pursuit(PursuitState::spawn(&self.spec, rng)),
            GameKind::ResourceGrid => EpisodeState::Resource(ResourceState::spawn(&self.spec, rng)),
        }
    }

    pub fn legal_actions(&self, state: &EpisodeState) -> Result<ActionSet, GameError> {
        if state.is_terminal() {
            return Err(GameError::Terminal);
        }
        Ok(match state {
            EpisodeState::Kuhn(_) => ActionSet::of(&[Action::Pass, Action::Bet]),
            EpisodeState::Leduc(s) => s.legal_actions(&self.spec),
            EpisodeState::Pursuit(_) => pursuit::ACTIONS,
            EpisodeState::Resource(_) => resource::ACTIONS,
        })
    }

    /// Apply `action` in place.
    pub fn apply(&self, state: &mut EpisodeState, action: Action) -> Result<(), GameError> {
        let legal = self.legal_actions(state)?;
        if !legal.contains(action) {
            return Err(GameError::IllegalAction { action, legal });
        }
        match state {
            EpisodeState::Kuhn(s) => s.apply(action),
            EpisodeState::Leduc(s) => s.apply(&self.spec, action),
            EpisodeState::Pursuit(s) => s.apply(&self.spec, action),
            EpisodeState::Resource(s) => s.apply(&self.spec, action),
        }
        Ok(())
    }

    pub fn step(&self, state: &EpisodeState, action: Action) -> Result<EpisodeState, GameError> {
        let mut next = state.clone();
        self.apply(&mut next, action)?;
        Ok(next)
    }

    /// Canonical string for what `player` has observed so far.
    pub fn info_state_key(&self, state: &EpisodeState, player: usize) -> String {
        match state {
            EpisodeState::Kuhn(s) => s.info_key(player),
            EpisodeState::Leduc(s) => s.info_key(player, false),
            EpisodeState::Pursuit(s) => s.info_key(),
            EpisodeState::Resource(s) => s.info_key(),
        }
    }

    /// Key built from public information only (private card hidden).
    /// Identical to [`Game::info_state_key`] for perfect-information games.
    pub fn public_key(&self, state: &EpisodeState, player: usize) -> String {
        match state {
            EpisodeState::Kuhn(s) => s.public_key(),
            EpisodeState::Leduc(s) => s.info_key(player, true),
            _ => self.info_state_key(state, player),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.spec.kind {
            GameKind::Kuhn => kuhn::FEATURE_DIM,
            GameKind::Leduc => leduc::feature_dim(self.spec.rank_count),
            GameKind::Gridworld => pursuit::feature_dim(self.spec.grid_size),
            GameKind::ResourceGrid => resource::feature_dim(self.spec.grid_size),
        }
    }

    /// Fixed-length vector with entries in `[0, 1]`.
    pub fn featurize(&self, state: &EpisodeState, player: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim()];
        match state {
            EpisodeState::Kuhn(s) => s.featurize(player, &mut out),
            EpisodeState::Leduc(s) => s.featurize(&self.spec, player, &mut out),
            EpisodeState::Pursuit(s) => s.featurize(&self.spec, &mut out),
            EpisodeState::Resource(s) => s.featurize(&self.spec, &mut out),
        }
        out
    }

    /// Features with the player's private card zeroed out.
    pub fn public_features(&self, state: &EpisodeState, player: usize) -> Vec<f64> {
        let mut out = self.featurize(state, player);
        let private = match self.spec.kind {
            GameKind::Kuhn => 3,
            GameKind::Leduc => self.spec.rank_count as usize,
            GameKind::Gridworld | GameKind::ResourceGrid => 0,
        };
        out[..private].iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// All player-0 information-state keys, by exhaustive tree walk.
    pub fn enumerate_info_states(&self) -> Result<BTreeSet<String>, GameError> {
        match self.spec.kind {
            GameKind::Kuhn => Ok(kuhn::enumerate_p0_keys()),
            GameKind::Leduc => Ok(leduc::enumerate_p0_keys(&self.spec)),
            kind => Err(GameError::NotEnumerable(kind)),
        }
    }
}

//! Episode loop, training regimes and the bi-level attack.
//!
//! Player 0's legal set always passes through an [`ActionFilter`]; player 1
//! is never filtered. Chance (deals, spawns) and policy randomness come from
//! separate streams so that exploration never perturbs the deals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::adversary::{AdvMode, Adversary, AdversaryFilter, AttackKind};
use crate::agent::{ActMode, Agent, Observation, SimRng};
use crate::game::{Action, ActionSet, Game, ToMove};
use crate::mask::{ActionFilter, MaskDiagnostics, MaskStrategy, MaskTable, VisitLog};

/// The two random streams of a run.
#[derive(Clone, Debug)]
pub struct Streams {
    pub chance: SimRng,
    pub policy: SimRng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams {
            chance: SimRng::seed_from_u64(seed),
            policy: SimRng::seed_from_u64(seed ^ 0x5DEE_CE66_D1A4_F87D),
        }
    }

    /// An independent pair of streams derived from this one.
    pub fn fork(&mut self) -> Self {
        Streams { chance: SimRng::seed_from_u64(self.chance.random()), policy: SimRng::seed_from_u64(self.policy.random()) }
    }
}

/// Who plays which seat.
#[derive(Clone)]
pub enum Seats {
    /// One learner plays both seats and learns from both.
    Shared(Box<dyn Agent>),
    /// Independent learners per seat.
    Separate([Box<dyn Agent>; 2]),
    /// Player 1 is a frozen snapshot that acts greedily and never learns.
    FixedOpponent { learner: Box<dyn Agent>, opponent: Box<dyn Agent> },
}

impl Seats {
    /// Freeze a copy of the seat-1 agent as a fixed opponent.
    pub fn freeze_opponent(self) -> Self {
        match self {
            Seats::Shared(a) => Seats::FixedOpponent { opponent: a.clone(), learner: a },
            Seats::Separate([a, b]) => Seats::FixedOpponent { learner: a, opponent: b },
            fixed => fixed,
        }
    }

    /// The player-0 learner.
    pub fn victim(&self) -> &dyn Agent {
        match self {
            Seats::Shared(a) => a.as_ref(),
            Seats::Separate([a, _]) => a.as_ref(),
            Seats::FixedOpponent { learner, .. } => learner.as_ref(),
        }
    }

    pub fn victim_mut(&mut self) -> &mut Box<dyn Agent> {
        match self {
            Seats::Shared(a) => a,
            Seats::Separate([a, _]) => a,
            Seats::FixedOpponent { learner, .. } => learner,
        }
    }

    fn seat(&mut self, seat: usize, mode: ActMode) -> (&mut dyn Agent, ActMode) {
        match self {
            Seats::Shared(a) => (a.as_mut(), mode),
            Seats::Separate(agents) => (agents[seat].as_mut(), mode),
            Seats::FixedOpponent { learner, opponent } => {
                if seat == 0 {
                    (learner.as_mut(), mode)
                } else {
                    (opponent.as_mut(), ActMode::Eval)
                }
            }
        }
    }

    fn finish(&mut self, mode: ActMode) {
        match self {
            Seats::Shared(a) => a.finish_episode(mode),
            Seats::Separate(agents) => agents.iter_mut().for_each(|a| a.finish_episode(mode)),
            Seats::FixedOpponent { learner, opponent } => {
                learner.finish_episode(mode);
                opponent.finish_episode(ActMode::Eval);
            }
        }
    }
}

/// Play one episode. Player 0's decisions go through `filter`; when `log`
/// is given, each one is recorded along with the executed action.
pub fn play_episode(
    game: &Game,
    seats: &mut Seats,
    filter: &mut dyn ActionFilter,
    mode: ActMode,
    streams: &mut Streams,
    mut log: Option<(&mut VisitLog, &mut Vec<Action>)>,
) -> [f64; 2] {
    let mut state = game.new_episode(&mut streams.chance);
    for seat in 0..2 {
        let (agent, m) = seats.seat(seat, mode);
        agent.begin_episode(seat, m, &mut streams.policy);
    }
    while let ToMove::Player(player) = state.to_move() {
        let legal = game.legal_actions(&state).expect("non-terminal state");
        let action = {
            let obs = Observation::new(game, &state, player, legal);
            let retained = if player == 0 { filter.retained(&obs, &mut streams.policy) } else { legal };
            assert!(!retained.is_empty() && retained.is_subset(legal), "filter broke the legal set at {}", obs.key());
            let (agent, m) = seats.seat(player, mode);
            let chosen = agent.act(player, &obs, retained, m, &mut streams.policy);
            if player == 0 {
                let executed = filter.replace(&obs, chosen, &mut streams.policy);
                if let Some((log, actions)) = log.as_mut() {
                    log.record(obs.key(), legal, retained);
                    actions.push(executed);
                }
                executed
            } else {
                chosen
            }
        };
        game.apply(&mut state, action).expect("agents choose legal actions");
    }
    let returns = state.returns().expect("terminal");
    for (seat, ret) in returns.iter().enumerate() {
        let (agent, m) = seats.seat(seat, mode);
        agent.end_episode(seat, *ret, m, &mut streams.policy);
    }
    seats.finish(mode);
    filter.end_episode(returns[0]);
    if let Some((log, _)) = log {
        log.episodes += 1;
    }
    returns
}

/// [`play_episode`] with logging, keeping executed actions in `executed`.
pub fn play_logged(
    game: &Game,
    seats: &mut Seats,
    filter: &mut dyn ActionFilter,
    mode: ActMode,
    streams: &mut Streams,
    log: &mut VisitLog,
    executed: &mut Vec<Action>,
) -> [f64; 2] {
    play_episode(game, seats, filter, mode, streams, Some((log, executed)))
}

/// Player-0 legal sets seen over `episodes` uniformly random playouts.
pub fn legal_sets(game: &Game, rng: &mut SimRng, episodes: usize) -> BTreeMap<String, ActionSet> {
    let mut out = BTreeMap::new();
    for _ in 0..episodes {
        let mut state = game.new_episode(rng);
        while let ToMove::Player(p) = state.to_move() {
            let legal = game.legal_actions(&state).expect("non-terminal");
            if p == 0 {
                out.entry(game.info_state_key(&state, 0)).or_insert(legal);
            }
            let a = legal.choose(rng).expect("non-empty");
            game.apply(&mut state, a).expect("legal");
        }
    }
    out
}

/// Mean player-0 reward per fixed-size window of training episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub size: usize,
    pub means: Vec<f64>,
    acc: f64,
    count: usize,
}

impl Windows {
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "window size must be positive");
        Windows { size, means: Vec::new(), acc: 0.0, count: 0 }
    }

    pub fn push(&mut self, r: f64) {
        self.acc += r;
        self.count += 1;
        if self.count == self.size {
            self.means.push(self.acc / self.size as f64);
            self.acc = 0.0;
            self.count = 0;
        }
    }
}

/// Train for `episodes` under `filter`, logging player-0 rewards into `windows`.
pub fn train(
    game: &Game,
    seats: &mut Seats,
    filter: &mut dyn ActionFilter,
    episodes: usize,
    streams: &mut Streams,
    windows: &mut Windows,
) {
    for _ in 0..episodes {
        let r = play_episode(game, seats, filter, ActMode::Train, streams, None);
        windows.push(r[0]);
    }
}

/// Unmasked self-play training.
pub fn pretrain(game: &Game, seats: &mut Seats, episodes: usize, streams: &mut Streams, windows: &mut Windows) {
    train(game, seats, &mut MaskStrategy::None, episodes, streams, windows);
}

#[derive(Clone, Debug)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
    pub log: VisitLog,
    pub executed: Vec<Action>,
}

/// Play without learning or exploration and report player 0's mean return.
pub fn evaluate(
    game: &Game,
    seats: &mut Seats,
    filter: &mut dyn ActionFilter,
    episodes: usize,
    streams: &mut Streams,
) -> EvalResult {
    let mut log = VisitLog::default();
    let mut executed = Vec::new();
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let r = play_episode(game, seats, filter, ActMode::Eval, streams, Some((&mut log, &mut executed)));
        returns.push(r[0]);
    }
    let mean = returns.iter().sum::<f64>() / episodes.max(1) as f64;
    let std = if episodes > 1 { crate::metrics::stats::sample_std(&returns) } else { 0.0 };
    EvalResult { mean, std, episodes, log, executed }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub pretrain_episodes: usize,
    pub outer_iterations: usize,
    pub inner_episodes: usize,
    pub eval_episodes: usize,
    /// Extra masked training after the attack (learning-curve runs).
    pub extension_episodes: usize,
    /// Victim training under a fixed mask (budget, transfer and control runs).
    pub post_mask_episodes: usize,
    pub window: usize,
}

impl TrainingSchedule {
    pub fn attack_episodes(&self) -> usize {
        self.outer_iterations * self.inner_episodes
    }
}

/// Training-time defenses layered under the attacker.
#[derive(Clone, Debug, PartialEq)]
pub enum Defense {
    None,
    /// Each own decision drops one random retained action with probability `p`.
    Dropout(f64),
    /// Persistent random masks, cycled per episode.
    Ensemble(Vec<MaskTable>),
}

/// Applies a [`Defense`] on top of another filter.
pub struct Defended<'a> {
    pub inner: &'a mut dyn ActionFilter,
    pub defense: &'a Defense,
    episode: usize,
}

impl<'a> Defended<'a> {
    pub fn new(inner: &'a mut dyn ActionFilter, defense: &'a Defense) -> Self {
        Defended { inner, defense, episode: 0 }
    }
}

impl ActionFilter for Defended<'_> {
    fn retained(&mut self, obs: &Observation<'_>, rng: &mut SimRng) -> ActionSet {
        let kept = self.inner.retained(obs, rng);
        match self.defense {
            Defense::None => kept,
            Defense::Dropout(p) => {
                if kept.len() > 1 && rng.random::<f64>() < *p {
                    kept.without(kept.choose(rng).expect("non-empty"))
                } else {
                    kept
                }
            }
            Defense::Ensemble(masks) if !masks.is_empty() => masks[self.episode % masks.len()].apply(obs.key(), kept),
            Defense::Ensemble(_) => kept,
        }
    }

    fn replace(&mut self, obs: &Observation<'_>, chosen: Action, rng: &mut SimRng) -> Action {
        self.inner.replace(obs, chosen, rng)
    }

    fn end_episode(&mut self, p0_return: f64) {
        self.episode += 1;
        self.inner.end_episode(p0_return);
    }
}

/// Per-iteration trace of a bi-level run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BilevelTrace {
    /// Mean player-0 return over each iteration's inner episodes.
    pub inner_means: Vec<f64>,
}

/// Alternate `inner_episodes` of victim training under the adversary's
/// sampled decisions with one adversary update, `outer_iterations` times.
#[allow(clippy::too_many_arguments)]
pub fn run_bilevel(
    game: &Game,
    seats: &mut Seats,
    adversary: &mut dyn Adversary,
    kind: AttackKind,
    schedule: &TrainingSchedule,
    defense: &Defense,
    streams: &mut Streams,
    windows: &mut Windows,
) -> BilevelTrace {
    let mut trace = BilevelTrace::default();
    for _ in 0..schedule.outer_iterations {
        let mut filter = AdversaryFilter::new(adversary, AdvMode::Sample, kind);
        let mut total = 0.0;
        {
            let mut defended = Defended::new(&mut filter, defense);
            for _ in 0..schedule.inner_episodes {
                let r = play_episode(game, seats, &mut defended, ActMode::Train, streams, None);
                windows.push(r[0]);
                total += r[0];
            }
        }
        let logs = filter.take_logs();
        trace.inner_means.push(total / schedule.inner_episodes.max(1) as f64);
        if let Err(e) = adversary.update(&logs) {
            log::warn!("adversary update skipped: {e}");
        }
    }
    trace
}

/// Evaluate under the adversary's greedy decisions.
pub fn evaluate_adversary(
    game: &Game,
    seats: &mut Seats,
    adversary: &mut dyn Adversary,
    kind: AttackKind,
    episodes: usize,
    streams: &mut Streams,
) -> EvalResult {
    let mut filter = AdversaryFilter::new(adversary, AdvMode::Greedy, kind);
    evaluate(game, seats, &mut filter, episodes, streams)
}

/// Train under a fixed mask table (no adversary learning).
pub fn train_under_mask(
    game: &Game,
    seats: &mut Seats,
    mask: &MaskTable,
    defense: &Defense,
    episodes: usize,
    streams: &mut Streams,
    windows: &mut Windows,
) {
    let mut strategy = MaskStrategy::Table(mask.clone());
    let mut defended = Defended::new(&mut strategy, defense);
    train(game, seats, &mut defended, episodes, streams, windows);
}

/// Random persistent masks over `seen` states: each state is masked with
/// probability `p`, removing a uniformly chosen legal action.
pub fn random_persistent_mask(seen: &[(String, ActionSet)], p: f64, rng: &mut SimRng) -> MaskTable {
    let mut mask = MaskTable::new();
    for (key, legal) in seen {
        if legal.len() > 1 && rng.random::<f64>() < p {
            let a = legal.choose(rng).expect("non-empty");
            mask.insert(key.clone(), a, 0.0).expect("no budget");
        }
    }
    mask
}

/// Everything recorded about one (condition, seed) run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub condition: String,
    pub seed: u64,
    pub game: String,
    pub victim: String,
    pub config_hash: String,
    pub window: usize,
    /// Player-0 training reward per window, across all phases.
    pub windows: Vec<f64>,
    /// Name and first window index of each training phase.
    pub phases: Vec<(String, usize)>,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub eval_episodes: usize,
    pub diagnostics: Option<MaskDiagnostics>,
    pub cac_w: Option<f64>,
    pub cac_v: Option<f64>,
    /// Mean inner-loop return per outer iteration.
    pub inner_trace: Vec<f64>,
    /// `(state, removed action, confidence)` for the greedy mask.
    pub confidence: Vec<(String, String, f64)>,
    /// Named scalars specific to an experiment (e.g. effective budget).
    pub extra: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl RunRecord {
    pub fn mark_phase(&mut self, name: &str, windows: &Windows) {
        self.phases.push((name.to_string(), windows.means.len()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameSpec;
    use crate::tabular::QLearner;

    fn kuhn_ql() -> (Game, Seats) {
        (Game::new(GameSpec::kuhn()).unwrap(), Seats::Shared(Box::new(QLearner::new(0.1, 0.15, 1.0))))
    }

    #[test]
    fn zero_pretraining_leaves_agent_unchanged() {
        let (game, mut seats) = kuhn_ql();
        let mut w = Windows::new(500);
        pretrain(&game, &mut seats, 0, &mut Streams::new(1), &mut w);
        assert!(w.means.is_empty());
        let mut s = Streams::new(2);
        let a = evaluate(&game, &mut seats, &mut MaskStrategy::None, 50, &mut s);
        let b = evaluate(&game, &mut Seats::Shared(Box::new(QLearner::new(0.1, 0.15, 1.0))), &mut MaskStrategy::None, 50, &mut Streams::new(2));
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn same_seed_same_windows() {
        let run = || {
            let (game, mut seats) = kuhn_ql();
            let mut w = Windows::new(100);
            pretrain(&game, &mut seats, 1_000, &mut Streams::new(7), &mut w);
            w.means
        };
        let a = run();
        assert_eq!(a.len(), 10);
        assert_eq!(a, run());
    }

    struct Spy(Vec<usize>);
    impl ActionFilter for Spy {
        fn retained(&mut self, obs: &Observation<'_>, _rng: &mut SimRng) -> ActionSet {
            self.0.push(obs.player());
            obs.legal()
        }
    }

    #[test]
    fn only_player_zero_is_filtered() {
        let (game, mut seats) = kuhn_ql();
        let mut spy = Spy(Vec::new());
        let mut w = Windows::new(10);
        train(&game, &mut seats, &mut spy, 200, &mut Streams::new(3), &mut w);
        assert!(!spy.0.is_empty());
        assert!(spy.0.iter().all(|p| *p == 0));
    }

    #[test]
    fn fixed_opponent_does_not_learn() {
        let (game, seats) = kuhn_ql();
        let mut seats = seats.freeze_opponent();
        let snapshot = match &seats {
            Seats::FixedOpponent { opponent, .. } => opponent.clone(),
            _ => unreachable!(),
        };
        let mut w = Windows::new(100);
        pretrain(&game, &mut seats, 500, &mut Streams::new(4), &mut w);
        let Seats::FixedOpponent { opponent, .. } = &seats else { unreachable!() };
        let state = game.new_episode(&mut SimRng::seed_from_u64(0));
        let mut state = state;
        game.apply(&mut state, Action::Bet).unwrap();
        let obs = Observation::new(&game, &state, 1, game.legal_actions(&state).unwrap());
        assert_eq!(opponent.action_values(&obs), snapshot.action_values(&obs));
    }

    #[test]
    fn windows_average_blocks() {
        let mut w = Windows::new(2);
        for r in [1.0, 3.0, -1.0, -1.0, 5.0] {
            w.push(r);
        }
        assert_eq!(w.means, vec![2.0, -1.0]);
    }

    #[test]
    fn dropout_keeps_sets_non_empty() {
        let game = Game::new(GameSpec::leduc(3)).unwrap();
        let mut seats = Seats::Shared(Box::new(QLearner::new(0.1, 0.15, 1.0)));
        let defense = Defense::Dropout(1.0);
        let mut inner = MaskStrategy::None;
        let mut d = Defended::new(&mut inner, &defense);
        let mut w = Windows::new(100);
        // play_episode asserts non-emptiness and containment at every decision.
        train(&game, &mut seats, &mut d, 300, &mut Streams::new(5), &mut w);
    }
}

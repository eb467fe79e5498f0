//! Building blocks shared by the registered experiments: victim and
//! adversary construction, the standard attack pipeline and record filling.

use rand::SeedableRng;

use super::config::{AdversaryConfig, AdversaryKind, Algorithm, ExperimentConfig, VictimConfig};
use super::ExperimentError;
use crate::adversary::{AdvMode, Adversary, AdversaryFilter, AttackKind, NeuralAdversary, TabularAdversary};
use crate::agent::{Agent, SimRng};
use crate::game::{Action, ActionSet, Game, GameSpec};
use crate::harness::{self, Defense, Defended, EvalResult, RunRecord, Seats, Streams, TrainingSchedule, Windows};
use crate::mask::{ActionFilter, MaskStrategy, MaskTable};
use crate::metrics::{self, Checkpoint};
use crate::neural::{DqnAgent, DqnConfig, NeuralNfspAgent, NfspConfig};
use crate::tabular::{NfspLearner, PpoLearner, PpoParams, QLearner, QTable};

pub fn build_agent(cfg: &VictimConfig, game: &Game, rng: &mut SimRng) -> Box<dyn Agent> {
    let table = || QTable::new(cfg.alpha, cfg.epsilon, cfg.gamma);
    match cfg.algorithm {
        Algorithm::Ql => Box::new(QLearner::from_table(table())),
        Algorithm::Nfsp => Box::new(NfspLearner::new(table(), cfg.eta)),
        Algorithm::Ppo => Box::new(PpoLearner::new(PpoParams {
            learning_rate: cfg.ppo_learning_rate,
            clip: cfg.ppo_clip,
            entropy_coef: cfg.ppo_entropy,
            ..PpoParams::default()
        })),
        Algorithm::Dqn => {
            Box::new(DqnAgent::new(DqnConfig::for_game(game.spec()), game.feature_dim(), game.all_actions(), rng))
        }
        Algorithm::NeuralNfsp => {
            let nfsp = NfspConfig { eta: cfg.eta, ..NfspConfig::for_game(game.spec()) };
            Box::new(NeuralNfspAgent::new(nfsp, game.feature_dim(), game.all_actions(), rng))
        }
    }
}

pub fn build_seats(cfg: &VictimConfig, game: &Game, rng: &mut SimRng) -> Seats {
    if cfg.shared {
        Seats::Shared(build_agent(cfg, game, rng))
    } else {
        Seats::Separate([build_agent(cfg, game, rng), build_agent(cfg, game, rng)])
    }
}

pub fn build_adversary(cfg: &AdversaryConfig, game: &Game, noop: bool, rng: &mut SimRng) -> Box<dyn Adversary> {
    match cfg.kind {
        AdversaryKind::Tabular => {
            let adv = TabularAdversary::new(cfg.learning_rate).with_info(cfg.info);
            Box::new(if noop { adv.with_noop() } else { adv })
        }
        AdversaryKind::Neural => {
            let adv = if cfg.hidden.is_empty() {
                NeuralAdversary::for_game(game, rng)
            } else {
                NeuralAdversary::new(game.feature_dim(), game.num_actions(), &cfg.hidden, 1e-3, rng)
            };
            Box::new(adv.with_info(cfg.info))
        }
    }
}

/// Derive a sub-seed so that each labelled stream of a run is independent.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed ^ h.rotate_left(17)
}

/// One seed's working state: game, victim, streams and the window trace.
pub struct Run {
    pub game: Game,
    pub seed: u64,
    pub seats: Seats,
    pub streams: Streams,
    pub windows: Windows,
    pub record: RunRecord,
}

impl Run {
    /// A fresh victim for `seed`.
    pub fn new(cfg: &ExperimentConfig, game: &Game, victim: &VictimConfig, seed: u64) -> Self {
        let mut init = SimRng::seed_from_u64(sub_seed(seed, "init"));
        let seats = build_seats(victim, game, &mut init);
        let record = RunRecord {
            experiment: cfg.id.clone(),
            seed,
            game: game.spec().name(),
            victim: victim.algorithm.name().to_string(),
            config_hash: cfg.hash(),
            window: cfg.schedule.window,
            notes: vec!["evaluation is greedy: no exploration, no learning".into()],
            ..RunRecord::default()
        };
        Run {
            game: game.clone(),
            seed,
            seats,
            streams: Streams::new(sub_seed(seed, "train")),
            windows: Windows::new(cfg.schedule.window),
            record,
        }
    }

    /// A copy that continues independently under a condition label.
    pub fn branch(&self, condition: &str) -> Self {
        let mut record = self.record.clone();
        record.condition = condition.to_string();
        Run {
            game: self.game.clone(),
            seed: self.seed,
            seats: self.seats.clone(),
            streams: Streams::new(sub_seed(self.seed, condition)),
            windows: self.windows.clone(),
            record,
        }
    }

    pub fn pretrain(&mut self, episodes: usize) {
        self.record.mark_phase("pretrain", &self.windows);
        harness::pretrain(&self.game, &mut self.seats, episodes, &mut self.streams, &mut self.windows);
    }

    pub fn train(&mut self, phase: &str, filter: &mut dyn ActionFilter, episodes: usize) {
        self.record.mark_phase(phase, &self.windows);
        harness::train(&self.game, &mut self.seats, filter, episodes, &mut self.streams, &mut self.windows);
    }

    /// Bi-level attack; keeps the inner-loop trace in the record.
    pub fn attack(&mut self, adversary: &mut dyn Adversary, kind: AttackKind, schedule: &TrainingSchedule, defense: &Defense) {
        self.record.mark_phase("attack", &self.windows);
        let trace = harness::run_bilevel(
            &self.game,
            &mut self.seats,
            adversary,
            kind,
            schedule,
            defense,
            &mut self.streams,
            &mut self.windows,
        );
        self.record.inner_trace = trace.inner_means;
        self.record.confidence = confidence_table(adversary);
    }

    /// Continue training against the adversary's greedy decisions.
    pub fn train_against(&mut self, phase: &str, adversary: &mut dyn Adversary, kind: AttackKind, episodes: usize) {
        self.record.mark_phase(phase, &self.windows);
        let chunk = 500;
        let mut done = 0;
        while done < episodes {
            let n = chunk.min(episodes - done);
            let mut filter = AdversaryFilter::new(adversary, AdvMode::Greedy, kind);
            harness::train(&self.game, &mut self.seats, &mut filter, n, &mut self.streams, &mut self.windows);
            done += n;
        }
    }

    /// Greedy evaluation under `filter` on the seed's evaluation deals.
    pub fn evaluate(&mut self, filter: &mut dyn ActionFilter, episodes: usize) -> EvalResult {
        let mut streams = Streams::new(sub_seed(self.seed, "eval"));
        let eval = harness::evaluate(&self.game, &mut self.seats, filter, episodes, &mut streams);
        self.fill_eval(&eval);
        eval
    }

    pub fn evaluate_adversary(&mut self, adversary: &mut dyn Adversary, kind: AttackKind, episodes: usize) -> EvalResult {
        let mut filter = AdversaryFilter::new(adversary, AdvMode::Greedy, kind);
        self.evaluate(&mut filter, episodes)
    }

    fn fill_eval(&mut self, eval: &EvalResult) {
        self.record.eval_mean = eval.mean;
        self.record.eval_std = eval.std;
        self.record.eval_episodes = eval.episodes;
        self.record.diagnostics = eval.log.observed_diagnostics().ok();
    }

    /// Reach, gaps and values of the current victim without a mask.
    pub fn checkpoint(&mut self, episodes: usize, label: &str) -> Result<Checkpoint, ExperimentError> {
        let mut streams = Streams::new(sub_seed(self.seed, "checkpoint"));
        let mut seats = self.seats.clone();
        Ok(metrics::measure_checkpoint(&self.game, &mut seats, &mut MaskStrategy::None, episodes, &mut streams, label)?)
    }

    /// CAC values of `mask` at a checkpoint.
    pub fn set_cac(&mut self, mask: &MaskTable, at: &Checkpoint) -> Result<(), ExperimentError> {
        self.record.cac_w = Some(metrics::cac_w(mask, &at.reach));
        self.record.cac_v = Some(metrics::cac_v(mask, &at.reach, &at.gaps)?);
        Ok(())
    }

    pub fn finish(mut self) -> RunRecord {
        self.record.windows = self.windows.means.clone();
        self.record
    }
}

/// `(state, removed action, confidence)` for every state the adversary knows.
pub fn confidence_table(adversary: &dyn Adversary) -> Vec<(String, String, f64)> {
    adversary
        .known_states()
        .into_iter()
        .map(|k| {
            let removed = adversary.greedy_choice(&k).map_or("none".to_string(), |a| a.name().to_string());
            let c = adversary.confidence(&k);
            (k, removed, c)
        })
        .collect()
}

/// The adversary's greedy decisions as a table over every state it knows.
pub fn full_mask(adversary: &dyn Adversary) -> MaskTable {
    adversary.project_top_k(usize::MAX)
}

/// Keep only the entries of `mask` that change the legal set at some
/// visited state.
pub fn effective_mask(mask: &MaskTable, seen: &[(String, ActionSet)]) -> MaskTable {
    let mut out = MaskTable::new();
    for (key, legal) in seen {
        if let Some(e) = mask.get(key) {
            if mask.apply(key, *legal) != *legal {
                out.insert(key.clone(), e.removed, e.confidence).expect("no budget");
            }
        }
    }
    out
}

/// A table removing `action` wherever it is legal among `states`.
pub fn fixed_table(action: Action, states: &[(String, ActionSet)]) -> MaskTable {
    let mut out = MaskTable::new();
    for (key, legal) in states {
        if legal.contains(action) && legal.len() > 1 {
            out.insert(key.clone(), action, 0.0).expect("no budget");
        }
    }
    out
}

/// Player-0 states reached by uniformly random play, with their legal sets.
pub fn reachable(game: &Game, seed: u64) -> Vec<(String, ActionSet)> {
    let mut rng = SimRng::seed_from_u64(sub_seed(seed, "reachable"));
    harness::legal_sets(game, &mut rng, 20_000).into_iter().collect()
}

/// Persistent random masks for the ensemble defense, over states visited
/// by the untrained victim.
pub fn ensemble_masks(game: &Game, size: usize, p: f64, seed: u64) -> Vec<MaskTable> {
    let mut rng = SimRng::seed_from_u64(sub_seed(seed, "ensemble"));
    let states: Vec<(String, ActionSet)> = harness::legal_sets(game, &mut rng, 5_000).into_iter().collect();
    (0..size).map(|_| harness::random_persistent_mask(&states, p, &mut rng)).collect()
}

/// Victim training under a defense, used in place of plain pretraining.
pub fn defended_pretrain(run: &mut Run, defense: &Defense, episodes: usize) {
    let mut none = MaskStrategy::None;
    let mut filter = Defended::new(&mut none, defense);
    run.train("pretrain", &mut filter, episodes);
}

/// Number of player-0 information states, when the game is enumerable.
pub fn state_count(spec: &GameSpec) -> Option<usize> {
    Game::new(spec.clone()).ok()?.enumerate_info_states().ok().map(|s| s.len())
}

//! The registered experiments, their default configurations and per-seed
//! procedures. Each procedure returns one record per condition.

use super::config::{AdversaryConfig, AdversaryKind, Algorithm, ExperimentConfig, Params, VictimConfig};
use super::protocol::{self, sub_seed, Run};
use super::ExperimentError;
use crate::adversary::{AttackKind, InfoSource};
use crate::agent::SimRng;
use crate::game::{Action, Game, GameSpec};
use crate::harness::{Defense, RunRecord, TrainingSchedule};
use crate::mask::{self, MaskStrategy};
use crate::metrics;
use rand::SeedableRng;

pub const IDS: [&str; 18] = [
    "kuhn-tabular",
    "leduc-tabular",
    "dqn-scale",
    "neural-nfsp-leduc5",
    "gridworld",
    "resource",
    "budget-sweep",
    "cac-correlation",
    "cacv-oracle",
    "rarl-compare",
    "matched-l0",
    "transfer",
    "selfplay-vs-fixed",
    "mask-timing",
    "threat-model",
    "defenses",
    "learning-curves",
    "dea",
];

pub const SEEDS: [u64; 5] = [42, 123, 456, 789, 1024];
pub const KUHN_SEEDS: [u64; 10] = [42, 123, 456, 789, 1024, 2048, 314, 777, 999, 1337];

/// One-line description of what an experiment reproduces.
pub fn describe(id: &str) -> Option<&'static str> {
    Some(match id {
        "kuhn-tabular" => "QL, PPO and NFSP in Kuhn: unmasked vs learned removal",
        "leduc-tabular" => "QL, PPO and NFSP in Leduc: unmasked vs learned removal",
        "dqn-scale" => "DQN across Leduc sizes: none, random and neural-adversary masking; damage ratio vs state count",
        "neural-nfsp-leduc5" => "neural NFSP in Leduc-5: none, random and neural-adversary masking",
        "gridworld" => "pursuit gridworld: none, random(0.3), fixed UP, adversarial",
        "resource" => "resource collection: none, random(0.3), fixed UP, adversarial",
        "budget-sweep" => "Kuhn QL: adversarial vs matched random masks at budgets k = 0..6",
        "cac-correlation" => "budget sweep plus Pearson correlation of CAC_w and CAC_v with reward",
        "cacv-oracle" => "Kuhn QL at k = 3: random, learned and CACv-greedy masks",
        "rarl-compare" => "Kuhn QL: learned removal vs learned perturbation at equal budget",
        "matched-l0" => "Leduc QL: learned mask vs random mask with the same effective support",
        "transfer" => "Kuhn: a mask learned on one seed applied to fresh QL and NFSP victims",
        "selfplay-vs-fixed" => "Kuhn QL: shared self-play, fixed opponent and separate tables under attack",
        "mask-timing" => "Leduc QL: evaluation-only, continued and from-scratch training under the learned mask",
        "threat-model" => "Leduc QL: random, fixed RAISE, public-information and private-information masking",
        "defenses" => "Leduc DQN: standard, action-dropout and random mask-ensemble training, plus separate networks",
        "learning-curves" => "reward windows through pretraining, attack and extended masked training",
        "dea" => "Kuhn QL under an all-singleton mask: forced play and opponent stationarity",
        _ => return None,
    })
}

fn schedule(pretrain: usize, outer: usize, post: usize) -> TrainingSchedule {
    TrainingSchedule {
        pretrain_episodes: pretrain,
        outer_iterations: outer,
        inner_episodes: 500,
        eval_episodes: 10_000,
        extension_episodes: 0,
        post_mask_episodes: post,
        window: 500,
    }
}

fn kuhn_schedule() -> TrainingSchedule {
    schedule(10_000, 20, 10_000)
}

fn leduc_schedule() -> TrainingSchedule {
    schedule(15_000, 25, 15_000)
}

fn dqn_schedule() -> TrainingSchedule {
    schedule(20_000, 20, 0)
}

fn neural_adversary() -> AdversaryConfig {
    AdversaryConfig { kind: AdversaryKind::Neural, learning_rate: 1e-3, ..AdversaryConfig::default() }
}

fn victim(algorithm: Algorithm) -> VictimConfig {
    VictimConfig { algorithm, ..VictimConfig::default() }
}

pub fn default_config(id: &str) -> Result<ExperimentConfig, ExperimentError> {
    let base = |game: &str, seeds: &[u64], schedule: TrainingSchedule| ExperimentConfig {
        id: id.to_string(),
        game: game.to_string(),
        seeds: seeds.to_vec(),
        workers: 0,
        victim: VictimConfig::default(),
        adversary: AdversaryConfig::default(),
        schedule,
        params: Params::default(),
    };
    let all = [Algorithm::Ql, Algorithm::Ppo, Algorithm::Nfsp];
    let cfg = match id {
        "kuhn-tabular" => {
            let mut c = base("kuhn", &SEEDS, kuhn_schedule());
            c.params.victims = all.to_vec();
            c
        }
        "leduc-tabular" => {
            let mut c = base("leduc", &SEEDS, leduc_schedule());
            c.params.victims = all.to_vec();
            c
        }
        "dqn-scale" => {
            let mut c = base("leduc", &SEEDS, dqn_schedule());
            c.victim = victim(Algorithm::Dqn);
            c.adversary = neural_adversary();
            c.params.games = ["leduc", "leduc-5", "leduc-10", "leduc-20"].map(String::from).to_vec();
            c
        }
        "neural-nfsp-leduc5" => {
            let mut c = base("leduc-5", &SEEDS, schedule(20_000, 25, 0));
            c.victim = victim(Algorithm::NeuralNfsp);
            c.adversary = neural_adversary();
            c
        }
        "gridworld" => base("gridworld", &SEEDS, schedule(50_000, 20, 10_000)),
        "resource" => base("resource", &SEEDS, schedule(20_000, 20, 10_000)),
        "budget-sweep" | "cac-correlation" => {
            let mut c = base("kuhn", &KUHN_SEEDS, kuhn_schedule());
            c.params.budgets = (0..=6).collect();
            c
        }
        "cacv-oracle" => {
            let mut c = base("kuhn", &KUHN_SEEDS, kuhn_schedule());
            c.params.budgets = vec![3];
            c
        }
        "rarl-compare" => base("kuhn", &KUHN_SEEDS, schedule(10_000, 20, 0)),
        "matched-l0" | "mask-timing" | "threat-model" => base("leduc", &SEEDS, leduc_schedule()),
        "transfer" | "selfplay-vs-fixed" => base("kuhn", &KUHN_SEEDS, kuhn_schedule()),
        "defenses" => {
            let mut c = base("leduc", &SEEDS, dqn_schedule());
            c.victim = victim(Algorithm::Dqn);
            c.adversary = neural_adversary();
            c
        }
        "learning-curves" => {
            let mut s = leduc_schedule();
            s.post_mask_episodes = 0;
            s.extension_episodes = 15_000;
            let mut c = base("leduc", &[42], s);
            c.params.games = ["kuhn", "leduc", "leduc", "leduc-5"].map(String::from).to_vec();
            c.params.victims = vec![Algorithm::Ql, Algorithm::Ql, Algorithm::Nfsp, Algorithm::Nfsp];
            c
        }
        "dea" => base("kuhn", &KUHN_SEEDS, kuhn_schedule()),
        other => return Err(ExperimentError::UnknownExperiment(other.to_string())),
    };
    Ok(cfg)
}

/// Run every condition of `cfg` for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let game = Game::new(GameSpec::by_name(&cfg.game)?)?;
    match cfg.id.as_str() {
        "kuhn-tabular" | "leduc-tabular" => tabular_victims(cfg, &game, seed),
        "dqn-scale" => dqn_scale(cfg, seed),
        "neural-nfsp-leduc5" => none_random_adversarial(cfg, &game, seed),
        "gridworld" | "resource" => cross_domain(cfg, &game, seed),
        "budget-sweep" | "cac-correlation" => budget_sweep(cfg, &game, seed),
        "cacv-oracle" => cacv_oracle(cfg, &game, seed),
        "rarl-compare" => rarl_compare(cfg, &game, seed),
        "matched-l0" => matched_l0(cfg, &game, seed),
        "transfer" => transfer(cfg, &game, seed),
        "selfplay-vs-fixed" => selfplay_vs_fixed(cfg, &game, seed),
        "mask-timing" => mask_timing(cfg, &game, seed),
        "threat-model" => threat_model(cfg, &game, seed),
        "defenses" => defenses(cfg, &game, seed),
        "learning-curves" => learning_curves(cfg, seed),
        "dea" => dea(cfg, &game, seed),
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

fn adversary_rng(seed: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(sub_seed(seed, label))
}

/// Pretrain, attack, optionally keep training against the greedy adversary,
/// then evaluate under it. Returns the attacked run and the adversary.
fn standard_attack(
    cfg: &ExperimentConfig,
    pretrained: &Run,
    condition: &str,
    adversary: &AdversaryConfig,
    kind: AttackKind,
) -> (Run, Box<dyn crate::adversary::Adversary>) {
    let mut run = pretrained.branch(condition);
    let mut rng = adversary_rng(run.seed, condition);
    let mut adv = protocol::build_adversary(adversary, &run.game, kind == AttackKind::Perturbation, &mut rng);
    run.attack(adv.as_mut(), kind, &cfg.schedule, &Defense::None);
    if cfg.schedule.post_mask_episodes > 0 {
        run.train_against("post-mask", adv.as_mut(), kind, cfg.schedule.post_mask_episodes);
    }
    run.evaluate_adversary(adv.as_mut(), kind, cfg.schedule.eval_episodes);
    (run, adv)
}

/// Baseline record: the pretrained victim evaluated without a mask.
fn unmasked(cfg: &ExperimentConfig, pretrained: &Run, condition: &str) -> RunRecord {
    let mut run = pretrained.branch(condition);
    run.evaluate(&mut MaskStrategy::None, cfg.schedule.eval_episodes);
    run.finish()
}

/// Train under a non-learning strategy for as long as the attack plus
/// post-mask phases last, then evaluate under it.
fn under_strategy(cfg: &ExperimentConfig, pretrained: &Run, condition: &str, strategy: MaskStrategy) -> Run {
    let mut run = pretrained.branch(condition);
    let mut strategy = strategy;
    let episodes = cfg.schedule.attack_episodes() + cfg.schedule.post_mask_episodes;
    run.train("masked", &mut strategy, episodes);
    run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
    run
}

fn pretrained(cfg: &ExperimentConfig, game: &Game, victim: &VictimConfig, seed: u64) -> Run {
    let mut run = Run::new(cfg, game, victim, seed);
    run.pretrain(cfg.schedule.pretrain_episodes);
    run
}

fn tabular_victims(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let victims = if cfg.params.victims.is_empty() { vec![cfg.victim.algorithm.clone()] } else { cfg.params.victims.clone() };
    let mut out = Vec::new();
    for algorithm in victims {
        let v = VictimConfig { algorithm: algorithm.clone(), ..cfg.victim.clone() };
        let base = pretrained(cfg, game, &v, seed);
        let name = algorithm.name();
        out.push(unmasked(cfg, &base, &format!("{name}/none")));
        let (run, _) = standard_attack(cfg, &base, &format!("{name}/adversarial"), &cfg.adversary, AttackKind::Removal);
        out.push(run.finish());
    }
    Ok(out)
}

fn none_random_adversarial(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let prefix = game.spec().name();
    let mut out = vec![unmasked(cfg, &base, &format!("{prefix}/none"))];
    let random = MaskStrategy::Random { p: cfg.params.random_p };
    out.push(under_strategy(cfg, &base, &format!("{prefix}/random"), random).finish());
    let (run, _) = standard_attack(cfg, &base, &format!("{prefix}/adversarial"), &cfg.adversary, AttackKind::Removal);
    out.push(run.finish());
    let states = protocol::state_count(game.spec()).map_or(f64::NAN, |n| n as f64);
    for r in &mut out {
        r.extra.insert("info_states".into(), states);
    }
    Ok(out)
}

fn dqn_scale(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let games = if cfg.params.games.is_empty() { vec![cfg.game.clone()] } else { cfg.params.games.clone() };
    let mut out = Vec::new();
    for name in games {
        let spec = GameSpec::by_name(&name)?;
        let game = Game::new(spec.clone())?;
        let mut sub = cfg.clone();
        // The largest game gets the longer budget: 30k pretraining, 25 outer iterations.
        if spec.rank_count >= 20 {
            sub.schedule.pretrain_episodes = sub.schedule.pretrain_episodes.max(30_000);
            sub.schedule.outer_iterations = sub.schedule.outer_iterations.max(25);
        }
        out.extend(none_random_adversarial(&sub, &game, seed)?);
    }
    Ok(out)
}

fn cross_domain(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut out = vec![unmasked(cfg, &base, "none")];
    let p = cfg.params.random_p;
    out.push(under_strategy(cfg, &base, &format!("random-{p}"), MaskStrategy::Random { p }).finish());
    out.push(under_strategy(cfg, &base, "fixed-up", MaskStrategy::Fixed(Action::Up)).finish());
    let (run, _) = standard_attack(cfg, &base, "adversarial", &cfg.adversary, AttackKind::Removal);
    out.push(run.finish());
    Ok(out)
}

/// Full-budget attack, then for each k: the top-k projection and a random
/// mask of the same support, each used to retrain the pretrained victim.
fn budget_sweep(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut probe = base.branch("checkpoint");
    let at = probe.checkpoint(cfg.params.reach_episodes, "pretrained")?;
    let seen = protocol::reachable(game, seed);
    let mut attack = base.branch("attack");
    let mut rng = adversary_rng(seed, "adversary");
    let mut adv = protocol::build_adversary(&cfg.adversary, game, false, &mut rng);
    let mut schedule = cfg.schedule.clone();
    schedule.post_mask_episodes = 0;
    attack.attack(adv.as_mut(), AttackKind::Removal, &schedule, &Defense::None);
    let mut mask_rng = adversary_rng(seed, "random-masks");
    let mut out = Vec::new();
    for &k in &cfg.params.budgets {
        let learned = adv.project_top_k(k);
        let random = mask::matched_random(&learned, &seen, &mut mask_rng)?;
        for (label, table) in [("adversarial", learned), ("random", random)] {
            let mut run = base.branch(&format!("{label}-k{k}"));
            let mut strategy = MaskStrategy::Table(table.clone());
            run.train("post-mask", &mut strategy, cfg.schedule.post_mask_episodes);
            run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
            run.set_cac(&table, &at)?;
            run.record.extra.insert("k".into(), k as f64);
            if label == "adversarial" {
                run.record.confidence = protocol::confidence_table(adv.as_ref());
                run.record.inner_trace = attack.record.inner_trace.clone();
            }
            out.push(run.finish());
        }
    }
    Ok(out)
}

fn cacv_oracle(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let k = cfg.params.budgets.first().copied().unwrap_or(3);
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut probe = base.branch("checkpoint");
    let at = probe.checkpoint(cfg.params.reach_episodes, "pretrained")?;
    let seen = protocol::reachable(game, seed);
    let mut attack = base.branch("attack");
    let mut rng = adversary_rng(seed, "adversary");
    let mut adv = protocol::build_adversary(&cfg.adversary, game, false, &mut rng);
    let mut schedule = cfg.schedule.clone();
    schedule.post_mask_episodes = 0;
    attack.attack(adv.as_mut(), AttackKind::Removal, &schedule, &Defense::None);
    let learned = adv.project_top_k(k);
    let random = mask::matched_random(&learned, &seen, &mut adversary_rng(seed, "random-mask"))?;
    let oracle = metrics::cacv_greedy(k, &at.reach, &at.gaps, &at.values);
    let mut out = vec![unmasked(cfg, &base, "none")];
    for (label, table) in [("random", random), ("learned", learned), ("cacv-greedy", oracle)] {
        let mut run = base.branch(&format!("{label}-k{k}"));
        let mut strategy = MaskStrategy::Table(table.clone());
        run.train("post-mask", &mut strategy, cfg.schedule.post_mask_episodes);
        run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
        run.set_cac(&table, &at)?;
        out.push(run.finish());
    }
    Ok(out)
}

fn rarl_compare(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut out = vec![unmasked(cfg, &base, "none")];
    let (run, _) = standard_attack(cfg, &base, "perturbation", &cfg.adversary, AttackKind::Perturbation);
    out.push(run.finish());
    let (run, _) = standard_attack(cfg, &base, "removal", &cfg.adversary, AttackKind::Removal);
    out.push(run.finish());
    Ok(out)
}

/// Learned mask vs a random mask over the same number of visited states;
/// both retrain the pretrained victim for the same masked budget.
fn matched_l0(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut probe = base.branch("checkpoint");
    let at = probe.checkpoint(cfg.params.reach_episodes, "pretrained")?;
    let seen: Vec<_> = at.reach.states.iter().map(|(k, e)| (k.clone(), e.legal)).collect();
    let (attacked, adv) = standard_attack(cfg, &base, "attack", &cfg.adversary, AttackKind::Removal);
    let learned = protocol::effective_mask(&protocol::full_mask(adv.as_ref()), &seen);
    let random = mask::matched_random(&learned, &seen, &mut adversary_rng(seed, "random-mask"))?;
    let mut out = vec![unmasked(cfg, &base, "none")];
    let episodes = cfg.schedule.attack_episodes() + cfg.schedule.post_mask_episodes;
    for (label, table) in [("adversarial", learned), ("matched-random", random)] {
        let mut run = base.branch(label);
        let mut strategy = MaskStrategy::Table(table.clone());
        run.train("masked", &mut strategy, episodes);
        run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
        run.set_cac(&table, &at)?;
        run.record.extra.insert("effective_k".into(), table.support_size() as f64);
        if label == "adversarial" {
            run.record.inner_trace = attacked.record.inner_trace.clone();
            run.record.confidence = attacked.record.confidence.clone();
        }
        out.push(run.finish());
    }
    Ok(out)
}

fn transfer(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let source_seed = cfg.params.transfer_source;
    let source = pretrained(cfg, game, &cfg.victim, source_seed);
    let (_, source_adv) = standard_attack(cfg, &source, "source", &cfg.adversary, AttackKind::Removal);
    let transferred = protocol::full_mask(source_adv.as_ref());

    let mut out = Vec::new();
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let episodes = cfg.schedule.attack_episodes() + cfg.schedule.post_mask_episodes;
    let mut strategy = MaskStrategy::Table(transferred.clone());
    let mut run = base.branch("ql/transferred");
    run.train("masked", &mut strategy, episodes);
    run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
    run.record.extra.insert("source_seed".into(), source_seed as f64);
    out.push(run.finish());
    let (run, _) = standard_attack(cfg, &base, "ql/retrained", &cfg.adversary, AttackKind::Removal);
    out.push(run.finish());

    let nfsp = VictimConfig { algorithm: Algorithm::Nfsp, ..cfg.victim.clone() };
    let nfsp_base = pretrained(cfg, game, &nfsp, seed);
    out.push(unmasked(cfg, &nfsp_base, "nfsp/none"));
    let mut run = nfsp_base.branch("nfsp/transferred");
    run.train("masked", &mut strategy, episodes);
    run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
    run.record.extra.insert("source_seed".into(), source_seed as f64);
    out.push(run.finish());
    Ok(out)
}

fn selfplay_vs_fixed(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let mut out = Vec::new();
    let shared = pretrained(cfg, game, &cfg.victim, seed);
    out.push(unmasked(cfg, &shared, "none"));
    let (run, _) = standard_attack(cfg, &shared, "self-play", &cfg.adversary, AttackKind::Removal);
    out.push(run.finish());

    let mut fixed = shared.branch("fixed-opponent");
    fixed.seats = fixed.seats.freeze_opponent();
    let (run, _) = standard_attack(cfg, &fixed, "fixed-opponent", &cfg.adversary, AttackKind::Removal);
    let mut rec = run.finish();
    rec.notes.push("player 1 frozen after pretraining".into());
    out.push(rec);

    let separate = VictimConfig { shared: false, ..cfg.victim.clone() };
    let base = pretrained(cfg, game, &separate, seed);
    let (run, _) = standard_attack(cfg, &base, "separate-tables", &cfg.adversary, AttackKind::Removal);
    out.push(run.finish());
    Ok(out)
}

fn mask_timing(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut out = vec![unmasked(cfg, &base, "none")];
    let (run, adv) = standard_attack(cfg, &base, "continued", &cfg.adversary, AttackKind::Removal);
    let learned = protocol::full_mask(adv.as_ref());
    out.push(run.finish());

    let mut strategy = MaskStrategy::Table(learned.clone());
    let mut run = base.branch("eval-only");
    run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
    out.push(run.finish());

    let mut run = Run::new(cfg, game, &cfg.victim, sub_seed(seed, "scratch"));
    run.record.seed = seed;
    run.record.condition = "retrain-from-scratch".into();
    let episodes = cfg.schedule.pretrain_episodes + cfg.schedule.attack_episodes() + cfg.schedule.post_mask_episodes;
    run.train("masked", &mut strategy, episodes);
    run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
    out.push(run.finish());
    Ok(out)
}

fn threat_model(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut out = vec![unmasked(cfg, &base, "none")];
    out.push(under_strategy(cfg, &base, "random", MaskStrategy::Random { p: cfg.params.random_p }).finish());
    out.push(under_strategy(cfg, &base, "fixed-raise", MaskStrategy::Fixed(Action::Raise)).finish());
    for info in [InfoSource::Public, InfoSource::Private] {
        let adversary = AdversaryConfig { info, ..cfg.adversary.clone() };
        let label = match info {
            InfoSource::Public => "public",
            InfoSource::Private => "private",
        };
        let (run, _) = standard_attack(cfg, &base, label, &adversary, AttackKind::Removal);
        out.push(run.finish());
    }
    Ok(out)
}

fn defenses(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let variants = [
        ("standard", Defense::None),
        ("dropout", Defense::Dropout(cfg.params.dropout_p)),
        ("ensemble", Defense::Ensemble(protocol::ensemble_masks(game, cfg.params.ensemble_size, cfg.params.ensemble_p, seed))),
    ];
    let mut out = Vec::new();
    for (label, defense) in variants {
        let mut run = Run::new(cfg, game, &cfg.victim, seed);
        run.record.condition = label.to_string();
        protocol::defended_pretrain(&mut run, &defense, cfg.schedule.pretrain_episodes);
        let mut rng = adversary_rng(seed, label);
        let mut adv = protocol::build_adversary(&cfg.adversary, game, false, &mut rng);
        run.attack(adv.as_mut(), AttackKind::Removal, &cfg.schedule, &defense);
        run.evaluate_adversary(adv.as_mut(), AttackKind::Removal, cfg.schedule.eval_episodes);
        out.push(run.finish());
    }
    let separate = VictimConfig { shared: false, ..cfg.victim.clone() };
    let base = pretrained(cfg, game, &separate, seed);
    let (run, _) = standard_attack(cfg, &base, "separate-networks", &cfg.adversary, AttackKind::Removal);
    out.push(run.finish());
    Ok(out)
}

fn learning_curves(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let games = if cfg.params.games.is_empty() { vec![cfg.game.clone()] } else { cfg.params.games.clone() };
    let mut out = Vec::new();
    for (i, name) in games.iter().enumerate() {
        let algorithm = cfg.params.victims.get(i).cloned().unwrap_or_else(|| cfg.victim.algorithm.clone());
        let v = VictimConfig { algorithm: algorithm.clone(), ..cfg.victim.clone() };
        let game = Game::new(GameSpec::by_name(name)?)?;
        let mut run = pretrained(cfg, &game, &v, seed);
        let label = format!("{name}/{}", algorithm.name());
        run.record.condition = label.clone();
        let mut rng = adversary_rng(seed, &label);
        let mut adv = protocol::build_adversary(&cfg.adversary, &game, false, &mut rng);
        run.attack(adv.as_mut(), AttackKind::Removal, &cfg.schedule, &Defense::None);
        let mut strategy = MaskStrategy::Table(protocol::full_mask(adv.as_ref()));
        run.train("extension", &mut strategy, cfg.schedule.extension_episodes);
        run.evaluate(&mut strategy, cfg.schedule.eval_episodes);
        let extension_start = run.record.phases.last().map_or(0, |p| p.1);
        let verdict = no_recovery(&run.windows.means[extension_start..]);
        run.record.extra.insert("no_recovery".into(), f64::from(u8::from(verdict.holds)));
        run.record.extra.insert("mid_mean".into(), verdict.mid_mean);
        run.record.extra.insert("mid_ci95".into(), verdict.mid_ci95);
        run.record.extra.insert("final_quarter_mean".into(), verdict.final_mean);
        out.push(run.finish());
    }
    Ok(out)
}

/// The no-recovery comparison over a window trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoRecovery {
    pub mid_mean: f64,
    pub mid_ci95: f64,
    pub final_mean: f64,
    pub holds: bool,
}

/// Final-quarter window mean vs the mean of the middle half: the trace
/// recovers if the former exceeds the latter by more than its CI width.
pub fn no_recovery(windows: &[f64]) -> NoRecovery {
    let n = windows.len();
    if n < 8 {
        return NoRecovery { mid_mean: f64::NAN, mid_ci95: f64::NAN, final_mean: f64::NAN, holds: false };
    }
    let mid = &windows[n / 4..3 * n / 4];
    let last = &windows[3 * n / 4..];
    let ci = metrics::mean_ci95(mid).expect("at least two windows");
    let final_mean = metrics::stats::mean(last);
    NoRecovery { mid_mean: ci.mean, mid_ci95: ci.ci95, final_mean, holds: final_mean <= ci.mean + ci.ci95 }
}

fn dea(cfg: &ExperimentConfig, game: &Game, seed: u64) -> Result<Vec<RunRecord>, ExperimentError> {
    let base = pretrained(cfg, game, &cfg.victim, seed);
    let mut attack = base.branch("attack");
    let mut rng = adversary_rng(seed, "adversary");
    let mut adv = protocol::build_adversary(&cfg.adversary, game, false, &mut rng);
    let mut schedule = cfg.schedule.clone();
    schedule.post_mask_episodes = 0;
    attack.attack(adv.as_mut(), AttackKind::Removal, &schedule, &Defense::None);
    let singleton = complete_singleton_mask(game, &protocol::full_mask(adv.as_ref()))?;
    let mut run = base.branch("all-singleton");
    let report = metrics::dea_check(
        game,
        &mut run.seats,
        &singleton,
        cfg.params.dea_episodes,
        cfg.schedule.window,
        &mut run.streams,
    )?;
    run.record.windows = report.opponent_windows.clone();
    run.evaluate(&mut MaskStrategy::Table(singleton), cfg.schedule.eval_episodes);
    run.record.extra.insert("forced_fraction".into(), report.forced_fraction);
    run.record.extra.insert("opponent_tail_std".into(), report.tail_std);
    run.record.extra.insert("dea_holds".into(), f64::from(u8::from(report.holds(cfg.params.dea_threshold))));
    let mut rec = run.finish();
    rec.windows = report.opponent_windows;
    rec.notes.push("windows hold player-1 reward during forced training".into());
    Ok(vec![rec])
}

/// Extend `mask` so that every enumerable two-action state is forced; states
/// it does not cover lose their first legal action.
pub fn complete_singleton_mask(game: &Game, mask: &crate::mask::MaskTable) -> Result<crate::mask::MaskTable, ExperimentError> {
    let mut rng = SimRng::seed_from_u64(0);
    let legal = crate::harness::legal_sets(game, &mut rng, 5_000);
    let mut out = crate::mask::MaskTable::new();
    for (key, set) in legal {
        if set.len() != 2 {
            return Err(ExperimentError::Invalid(format!("state {key} has {} actions; a single removal cannot force it", set.len())));
        }
        let removed = match mask.get(&key) {
            Some(e) if set.contains(e.removed) => e.removed,
            _ => set.first().expect("non-empty"),
        };
        out.insert(key, removed, 0.0).expect("no budget");
    }
    Ok(out)
}

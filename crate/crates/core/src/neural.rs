//! Neural victims: DQN with replay and a target network, and neural NFSP
//! (a DQN best response plus a supervised average-policy network).
//!
//! Both compute outputs for every action and restrict choice to the
//! retained set; TD targets maximize over the retained set stored with the
//! next state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{argmax_action, sample_weighted, ActMode, Agent, Observation, SimRng};
use crate::game::{Action, ActionSet, GameKind, GameSpec};
use crate::nn::{masked_softmax, softmax, Adam, Head, Mlp};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub features: Vec<f64>,
    /// Action slot within the game's action list.
    pub action: usize,
    pub reward: f64,
    /// Next own decision and the retained set there; `None` when terminal.
    pub next: Option<(Vec<f64>, ActionSet)>,
}

/// Fixed-capacity ring of transitions, sampled uniformly with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer { capacity, items: Vec::with_capacity(capacity.min(4096)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Uniform reservoir: after `n ≥ capacity` insertions each item survives
/// with probability `capacity / n`.
#[derive(Clone, Debug)]
pub struct ReservoirBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    seen: u64,
}

impl<T> ReservoirBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReservoirBuffer { capacity, items: Vec::new(), seen: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn push<R: Rng + ?Sized>(&mut self, item: T, rng: &mut R) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a T> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Multiplicative decay applied once per episode.
    pub epsilon_decay: f64,
    pub batch_size: usize,
    /// Copy online weights to the target every this many episodes.
    pub target_sync: u64,
    pub buffer_capacity: usize,
}

impl DqnConfig {
    /// 64-64 network, batch 64, sync 500 up to Leduc-5; 128-64, 128, 1000 beyond.
    pub fn for_game(spec: &GameSpec) -> Self {
        let large = spec.kind == GameKind::Leduc && spec.rank_count >= 10;
        DqnConfig {
            hidden: if large { vec![128, 64] } else { vec![64, 64] },
            learning_rate: 1e-3,
            gamma: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.9999,
            batch_size: if large { 128 } else { 64 },
            target_sync: if large { 1000 } else { 500 },
            buffer_capacity: 20_000,
        }
    }

    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(output);
        d
    }
}

/// ε after `episodes` decays from `start`.
pub fn decayed_epsilon(cfg: &DqnConfig, episodes: u64) -> f64 {
    (cfg.epsilon_start * cfg.epsilon_decay.powf(episodes as f64)).max(cfg.epsilon_end)
}

#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub online: Mlp,
    pub target: Mlp,
    adam: Adam,
    buffer: ReplayBuffer,
    pub cfg: DqnConfig,
    actions: ActionSet,
    pub epsilon: f64,
    episodes: u64,
    pending: [Option<(Vec<f64>, usize)>; 2],
    grads: Vec<f64>,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(cfg: DqnConfig, input_dim: usize, actions: ActionSet, rng: &mut R) -> Self {
        let online = Mlp::glorot(&cfg.dims(input_dim, actions.len()), Head::Linear, rng);
        Self::from_net(cfg, online, actions)
    }

    pub fn from_net(cfg: DqnConfig, online: Mlp, actions: ActionSet) -> Self {
        assert_eq!(online.output_dim(), actions.len(), "one output per action");
        DqnAgent {
            target: online.clone(),
            adam: Adam::for_net(&online, cfg.learning_rate),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            epsilon: cfg.epsilon_start,
            grads: vec![0.0; online.num_params()],
            online,
            cfg,
            actions,
            episodes: 0,
            pending: [None, None],
        }
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn q_values(&self, features: &[f64]) -> Vec<f64> {
        self.online.forward(features).expect("feature dimension")
    }

    /// ε-greedy over `retained`; a singleton is forced.
    pub fn choose<R: Rng + ?Sized>(&self, features: &[f64], retained: ActionSet, explore: bool, rng: &mut R) -> Action {
        if retained.len() == 1 {
            return retained.first().expect("non-empty");
        }
        if explore && rng.random::<f64>() < self.epsilon {
            return retained.choose(rng).expect("non-empty");
        }
        let q = self.q_values(features);
        argmax_action(retained, |a| q[a.slot()]).expect("non-empty")
    }

    /// Store the transition that ends at this decision, then take one train step.
    pub fn record<R: Rng + ?Sized>(&mut self, seat: usize, features: Vec<f64>, retained: ActionSet, action: Action, rng: &mut R) {
        if let Some((prev, a)) = self.pending[seat].take() {
            self.buffer.push(Transition { features: prev, action: a, reward: 0.0, next: Some((features.clone(), retained)) });
        }
        self.pending[seat] = Some((features, action.slot()));
        self.train_step(rng);
    }

    /// Close the seat's last transition with the episode return.
    pub fn finish_seat(&mut self, seat: usize, ret: f64) {
        if let Some((prev, a)) = self.pending[seat].take() {
            self.buffer.push(Transition { features: prev, action: a, reward: ret, next: None });
        }
    }

    pub fn push_transition(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One minibatch step on the mean squared TD error. `None` while the
    /// buffer holds fewer than a batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        let n = self.cfg.batch_size;
        if self.buffer.len() < n {
            return None;
        }
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let batch: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.buffer.len())).collect();
        let mut dq = vec![0.0; self.actions.len()];
        for i in batch {
            let t = &self.buffer.items[i];
            let target = t.reward
                + match &t.next {
                    Some((next, retained)) => {
                        let q = self.target.forward(next).expect("feature dimension");
                        self.cfg.gamma * retained.iter().map(|a| q[a.slot()]).fold(f64::NEG_INFINITY, f64::max)
                    }
                    None => 0.0,
                };
            let trace = self.online.forward_trace(&t.features).expect("feature dimension");
            let err = trace.logits()[t.action] - target;
            loss += err * err;
            dq.iter_mut().for_each(|d| *d = 0.0);
            dq[t.action] = 2.0 * err / n as f64;
            self.online.backward_logits(&trace, &dq, &mut self.grads);
        }
        if let Err(e) = self.adam.step(&mut self.online, &self.grads) {
            log::warn!("skipping DQN update: {e}");
        }
        Some(loss / n as f64)
    }

    /// Episode bookkeeping: ε decay and target sync.
    pub fn end_of_episode(&mut self) {
        self.episodes += 1;
        self.epsilon = decayed_epsilon(&self.cfg, self.episodes);
        if self.episodes.is_multiple_of(self.cfg.target_sync) {
            self.target = self.online.clone();
        }
    }
}

impl Agent for DqnAgent {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn act(&mut self, seat: usize, obs: &Observation<'_>, retained: ActionSet, mode: ActMode, rng: &mut SimRng) -> Action {
        let features = obs.features();
        let action = self.choose(&features, retained, mode == ActMode::Train, rng);
        if mode == ActMode::Train {
            self.record(seat, features, retained, action, rng);
        }
        action
    }

    fn end_episode(&mut self, seat: usize, ret: f64, mode: ActMode, _rng: &mut SimRng) {
        match mode {
            ActMode::Train => self.finish_seat(seat, ret),
            ActMode::Eval => self.pending[seat] = None,
        }
    }

    fn finish_episode(&mut self, mode: ActMode) {
        if mode == ActMode::Train {
            self.end_of_episode();
        }
    }

    fn action_values(&self, obs: &Observation<'_>) -> Option<Vec<(Action, f64)>> {
        let q = self.q_values(&obs.features());
        Some(obs.legal().iter().map(|a| (a, q[a.slot()])).collect())
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NfspConfig {
    pub best_response: DqnConfig,
    pub average_hidden: Vec<usize>,
    pub average_lr: f64,
    pub average_batch: usize,
    pub reservoir_capacity: usize,
    pub eta: f64,
}

impl NfspConfig {
    pub fn for_game(spec: &GameSpec) -> Self {
        let mut best_response = DqnConfig::for_game(spec);
        best_response.hidden = vec![128, 64];
        NfspConfig {
            best_response,
            average_hidden: vec![128, 64],
            average_lr: 1e-3,
            average_batch: 128,
            reservoir_capacity: 50_000,
            eta: 0.1,
        }
    }
}

/// Neural NFSP: with probability η per episode and seat, act by the DQN best
/// response and store the choice in the reservoir; otherwise sample the
/// average-policy network restricted to the retained set.
#[derive(Clone, Debug)]
pub struct NeuralNfspAgent {
    pub best_response: DqnAgent,
    pub average: Mlp,
    average_adam: Adam,
    reservoir: ReservoirBuffer<(Vec<f64>, usize)>,
    pub cfg: NfspConfig,
    use_best_response: [bool; 2],
    grads: Vec<f64>,
}

impl NeuralNfspAgent {
    pub fn new<R: Rng + ?Sized>(cfg: NfspConfig, input_dim: usize, actions: ActionSet, rng: &mut R) -> Self {
        let best_response = DqnAgent::new(cfg.best_response.clone(), input_dim, actions, rng);
        let mut dims = vec![input_dim];
        dims.extend(&cfg.average_hidden);
        dims.push(actions.len());
        // Zero output layer: the untrained average policy is exactly uniform.
        let mut average = Mlp::glorot(&dims, Head::Softmax, rng);
        let last = dims[dims.len() - 2] * actions.len() + actions.len();
        let n = average.num_params();
        average.params_mut()[n - last..].iter_mut().for_each(|p| *p = 0.0);
        NeuralNfspAgent {
            best_response,
            average_adam: Adam::for_net(&average, cfg.average_lr),
            grads: vec![0.0; average.num_params()],
            average,
            reservoir: ReservoirBuffer::new(cfg.reservoir_capacity),
            cfg,
            use_best_response: [false; 2],
        }
    }

    pub fn reservoir(&self) -> &ReservoirBuffer<(Vec<f64>, usize)> {
        &self.reservoir
    }

    pub fn add_sample<R: Rng + ?Sized>(&mut self, features: Vec<f64>, action: Action, rng: &mut R) {
        self.reservoir.push((features, action.slot()), rng);
    }

    /// Average policy over `retained`, renormalized.
    pub fn average_policy(&self, features: &[f64], retained: ActionSet) -> Vec<f64> {
        let logits = self.average.logits(features).expect("feature dimension");
        let allowed: Vec<bool> = (0..logits.len()).map(|i| retained.iter().any(|a| a.slot() == i)).collect();
        masked_softmax(&logits, &allowed)
    }

    fn sample_average<R: Rng + ?Sized>(&self, features: &[f64], retained: ActionSet, rng: &mut R) -> Action {
        let p = self.average_policy(features, retained);
        let slot = sample_weighted(&p, rng);
        retained.iter().find(|a| a.slot() == slot).expect("mass only on retained actions")
    }

    /// One cross-entropy step on a reservoir minibatch.
    pub fn train_average<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        let n = self.cfg.average_batch;
        if self.reservoir.len() < n {
            return None;
        }
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..n {
            let (x, a) = &self.reservoir.items[rng.random_range(0..self.reservoir.len())];
            let trace = self.average.forward_trace(x).expect("feature dimension");
            let mut p = softmax(trace.logits());
            loss -= p[*a].max(1e-300).ln();
            p[*a] -= 1.0;
            p.iter_mut().for_each(|v| *v /= n as f64);
            self.average.backward_logits(&trace, &p, &mut self.grads);
        }
        if let Err(e) = self.average_adam.step(&mut self.average, &self.grads) {
            log::warn!("skipping average-policy update: {e}");
        }
        Some(loss / n as f64)
    }
}

impl Agent for NeuralNfspAgent {
    fn name(&self) -> &'static str {
        "neural-nfsp"
    }

    fn begin_episode(&mut self, seat: usize, mode: ActMode, rng: &mut SimRng) {
        self.use_best_response[seat] = mode == ActMode::Train && rng.random::<f64>() < self.cfg.eta;
    }

    fn act(&mut self, seat: usize, obs: &Observation<'_>, retained: ActionSet, mode: ActMode, rng: &mut SimRng) -> Action {
        let features = obs.features();
        let action = if self.use_best_response[seat] {
            let a = self.best_response.choose(&features, retained, true, rng);
            self.reservoir.push((features.clone(), a.slot()), rng);
            a
        } else {
            self.sample_average(&features, retained, rng)
        };
        if mode == ActMode::Train {
            self.best_response.record(seat, features, retained, action, rng);
            self.train_average(rng);
        }
        action
    }

    fn end_episode(&mut self, seat: usize, ret: f64, mode: ActMode, rng: &mut SimRng) {
        self.best_response.end_episode(seat, ret, mode, rng);
    }

    fn finish_episode(&mut self, mode: ActMode) {
        self.best_response.finish_episode(mode);
    }

    fn action_values(&self, obs: &Observation<'_>) -> Option<Vec<(Action, f64)>> {
        self.best_response.action_values(obs)
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ks_uniform;
    use proptest::prelude::*;
    use rand::SeedableRng;

    const FCR: [Action; 3] = [Action::Fold, Action::Call, Action::Raise];

    fn small_cfg() -> DqnConfig {
        DqnConfig { hidden: vec![8], batch_size: 4, ..DqnConfig::for_game(&GameSpec::leduc(3)) }
    }

    /// Network whose Q-head is exactly `q` regardless of input.
    fn constant_net(q: &[f64]) -> Mlp {
        let mut net = Mlp::zeros(&[2, q.len()], Head::Linear);
        let n = net.num_params();
        net.params_mut()[n - q.len()..].copy_from_slice(q);
        net
    }

    #[test]
    fn epsilon_decay_closed_form() {
        let cfg = DqnConfig::for_game(&GameSpec::leduc(3));
        assert!((decayed_epsilon(&cfg, 10_000) - 0.9999f64.powi(10_000)).abs() < 1e-12);
        assert!((decayed_epsilon(&cfg, 10_000) - 0.368).abs() < 1e-3);
        assert_eq!(decayed_epsilon(&cfg, 1_000_000), 0.05);
        let mut rng = SimRng::seed_from_u64(0);
        let mut agent = DqnAgent::new(cfg, 37, ActionSet::of(&FCR), &mut rng);
        for _ in 0..10_000 {
            agent.end_of_episode();
        }
        assert!((agent.epsilon - 0.9999f64.powi(10_000)).abs() < 1e-9);
    }

    #[test]
    fn greedy_choice_skips_removed_best_action() {
        let agent = DqnAgent::from_net(small_cfg(), constant_net(&[0.1, -0.5, 3.0]), ActionSet::of(&FCR));
        let mut rng = SimRng::seed_from_u64(0);
        let retained = ActionSet::of(&[Action::Fold, Action::Call]);
        let mut greedy = agent.clone();
        greedy.epsilon = 0.0;
        assert_eq!(greedy.choose(&[0.0, 0.0], retained, true, &mut rng), Action::Fold);
        assert_eq!(greedy.choose(&[0.0, 0.0], ActionSet::of(&FCR), true, &mut rng), Action::Raise);
        assert_eq!(agent.choose(&[0.0, 0.0], ActionSet::of(&[Action::Call]), true, &mut rng), Action::Call);
    }

    proptest! {
        #[test]
        fn chosen_action_is_always_retained(q in proptest::array::uniform3(-5.0f64..5.0), bits in 1u8..8, eps in 0.0f64..1.0, seed: u64) {
            let mut agent = DqnAgent::from_net(small_cfg(), constant_net(&q), ActionSet::of(&FCR));
            agent.epsilon = eps;
            let retained: ActionSet = FCR.iter().enumerate().filter(|(i, _)| bits & (1 << i) != 0).map(|(_, a)| *a).collect();
            let mut rng = SimRng::seed_from_u64(seed);
            let a = agent.choose(&[0.3, 0.7], retained, true, &mut rng);
            prop_assert!(retained.contains(a));
            let best = retained.iter().map(|b| q[b.slot()]).fold(f64::NEG_INFINITY, f64::max);
            if eps == 0.0 {
                prop_assert_eq!(q[a.slot()], best);
            }
        }
    }

    #[test]
    fn terminal_batch_loss_and_fixed_point() {
        let mut agent = DqnAgent::from_net(small_cfg(), constant_net(&[0.0, 0.0, 0.0]), ActionSet::of(&FCR));
        let mut rng = SimRng::seed_from_u64(0);
        assert_eq!(agent.train_step(&mut rng), None);
        for _ in 0..4 {
            agent.push_transition(Transition { features: vec![1.0, 0.0], action: 1, reward: 1.0, next: None });
        }
        assert_eq!(agent.train_step(&mut rng), Some(1.0));

        let mut still = DqnAgent::from_net(small_cfg(), constant_net(&[0.0, 0.5, 0.0]), ActionSet::of(&FCR));
        for _ in 0..4 {
            still.push_transition(Transition { features: vec![1.0, 0.0], action: 1, reward: 0.5, next: None });
        }
        let before = still.online.clone();
        assert_eq!(still.train_step(&mut rng), Some(0.0));
        assert_eq!(still.online, before);
    }

    #[test]
    fn single_transition_moves_monotonically_toward_target() {
        let mut rng = SimRng::seed_from_u64(4);
        let mut agent = DqnAgent::new(DqnConfig { batch_size: 1, ..small_cfg() }, 2, ActionSet::of(&FCR), &mut rng);
        agent.push_transition(Transition { features: vec![0.5, 1.0], action: 2, reward: 1.0, next: None });
        let mut gap = (agent.q_values(&[0.5, 1.0])[2] - 1.0).abs();
        for _ in 0..2_000 {
            agent.train_step(&mut rng);
            let g = (agent.q_values(&[0.5, 1.0])[2] - 1.0).abs();
            assert!(g <= gap + 1e-12, "{g} > {gap}");
            gap = g;
        }
        assert!(gap < 0.05, "gap {gap}");
    }

    #[test]
    fn td_target_respects_stored_retained_set() {
        let mut agent = DqnAgent::from_net(DqnConfig { batch_size: 1, ..small_cfg() }, constant_net(&[0.0, 0.0, 0.0]), ActionSet::of(&FCR));
        agent.target = constant_net(&[0.0, 1.0, 9.0]);
        agent.push_transition(Transition {
            features: vec![0.0, 0.0],
            action: 0,
            reward: 0.0,
            next: Some((vec![0.0, 0.0], ActionSet::of(&[Action::Fold, Action::Call]))),
        });
        let mut rng = SimRng::seed_from_u64(0);
        // Target is max over {FOLD, CALL} = 1, so the loss is (0 - 1)².
        assert_eq!(agent.train_step(&mut rng), Some(1.0));
    }

    #[test]
    fn target_only_changes_at_sync() {
        let mut rng = SimRng::seed_from_u64(2);
        let mut agent = DqnAgent::new(DqnConfig { target_sync: 3, ..small_cfg() }, 2, ActionSet::of(&FCR), &mut rng);
        for _ in 0..8 {
            agent.push_transition(Transition { features: vec![1.0, 1.0], action: 0, reward: 1.0, next: None });
        }
        let frozen = agent.target.clone();
        for ep in 1..=3 {
            agent.train_step(&mut rng);
            agent.end_of_episode();
            if ep < 3 {
                assert_eq!(agent.target, frozen);
            }
        }
        assert_eq!(agent.target, agent.online);
        assert_ne!(agent.target, frozen);
    }

    #[test]
    fn reservoir_keeps_uniform_sample() {
        let capacity = 1000;
        let n = 10 * capacity;
        let mut res = ReservoirBuffer::new(capacity);
        let mut rng = SimRng::seed_from_u64(9);
        for i in 0..n {
            res.push(i, &mut rng);
        }
        assert_eq!(res.len(), capacity);
        assert_eq!(res.seen(), n as u64);
        let u: Vec<f64> = res.items().iter().map(|i| (*i as f64 + 0.5) / n as f64).collect();
        let (_, p) = ks_uniform(&u);
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn untrained_average_policy_is_uniform() {
        let mut rng = SimRng::seed_from_u64(1);
        let agent = NeuralNfspAgent::new(NfspConfig::for_game(&GameSpec::leduc(3)), 37, ActionSet::of(&FCR), &mut rng);
        let x = vec![0.5; 37];
        for p in agent.average_policy(&x, ActionSet::of(&FCR)) {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = agent.average_policy(&x, ActionSet::of(&[Action::Call, Action::Raise]));
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn average_policy_learns_best_response_frequencies() {
        let mut rng = SimRng::seed_from_u64(6);
        let mut cfg = NfspConfig::for_game(&GameSpec::leduc(3));
        cfg.average_hidden = vec![16];
        cfg.average_batch = 64;
        cfg.reservoir_capacity = 2_000;
        cfg.average_lr = 5e-3;
        let mut agent = NeuralNfspAgent::new(cfg, 3, ActionSet::of(&FCR), &mut rng);
        let x = vec![1.0, 0.0, 1.0];
        let target = [0.6, 0.3, 0.1];
        for _ in 0..2_000 {
            let a = FCR[sample_weighted(&target, &mut rng)];
            agent.add_sample(x.clone(), a, &mut rng);
        }
        let counts = FCR.map(|a| agent.reservoir().items().iter().filter(|(_, s)| *s == a.slot()).count() as f64);
        let empirical: Vec<f64> = counts.iter().map(|c| c / 2_000.0).collect();
        for _ in 0..1_500 {
            agent.train_average(&mut rng);
        }
        let p = agent.average_policy(&x, ActionSet::of(&FCR));
        let tv: f64 = p.iter().zip(&empirical).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.05, "TV {tv}: {p:?} vs {empirical:?}");
    }
}

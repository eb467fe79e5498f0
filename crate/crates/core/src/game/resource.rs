//! Two agents race to collect resources on a small grid.

use rand::Rng;

use super::pursuit::{moved, Cell};
use super::{Action, ActionSet, GameSpec, ToMove};

pub(super) const ACTIONS: ActionSet = ActionSet(
    (1 << Action::Up as u16)
        | (1 << Action::Down as u16)
        | (1 << Action::Left as u16)
        | (1 << Action::Right as u16),
);

pub(super) fn feature_dim(size: usize) -> usize {
    3 * size * size + 3
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceState {
    agents: [Cell; 2],
    resources: Vec<Cell>,
    collected: [u32; 2],
    to_move: usize,
    steps: u32,
    history: Vec<Action>,
    done: bool,
}

impl ResourceState {
    pub(super) fn spawn<R: Rng + ?Sized>(spec: &GameSpec, rng: &mut R) -> Self {
        let n = spec.grid_size;
        let picked = rand::seq::index::sample(rng, n * n, 2 + spec.resource_count);
        let cell = |i: usize| (i / n, i % n);
        let agents = [cell(picked.index(0)), cell(picked.index(1))];
        let resources = (2..2 + spec.resource_count).map(|k| cell(picked.index(k))).collect();
        Self::from_parts(agents, resources)
    }

    pub fn from_parts(agents: [Cell; 2], mut resources: Vec<Cell>) -> Self {
        resources.sort_unstable();
        ResourceState {
            agents,
            resources,
            collected: [0, 0],
            to_move: 0,
            steps: 0,
            history: Vec::new(),
            done: false,
        }
    }

    pub fn collected(&self) -> [u32; 2] {
        self.collected
    }

    pub fn remaining(&self) -> &[Cell] {
        &self.resources
    }

    pub(super) fn history(&self) -> &[Action] {
        &self.history
    }

    pub(super) fn to_move(&self) -> ToMove {
        if self.done {
            ToMove::Terminal
        } else {
            ToMove::Player(self.to_move)
        }
    }

    pub(super) fn apply(&mut self, spec: &GameSpec, action: Action) {
        let p = self.to_move;
        self.history.push(action);
        self.steps += 1;
        self.agents[p] = moved(self.agents[p], action, spec.grid_size);
        if let Some(i) = self.resources.iter().position(|c| *c == self.agents[p]) {
            self.resources.remove(i);
            self.collected[p] += 1;
        }
        self.done = self.resources.is_empty() || self.steps >= spec.max_steps;
        self.to_move = 1 - p;
    }

    fn diff(&self) -> i64 {
        i64::from(self.collected[0]) - i64::from(self.collected[1])
    }

    pub(super) fn returns(&self) -> Option<[f64; 2]> {
        let d = self.diff() as f64;
        self.done.then_some([d, -d])
    }

    pub(super) fn info_key(&self) -> String {
        let res: String = self.resources.iter().map(|(r, c)| format!("{r}{c}")).collect::<Vec<_>>().join(".");
        format!(
            "{},{};{},{};{};{};{}",
            self.agents[0].0,
            self.agents[0].1,
            self.agents[1].0,
            self.agents[1].1,
            res,
            self.diff(),
            self.to_move
        )
    }

    pub(super) fn featurize(&self, spec: &GameSpec, out: &mut [f64]) {
        let n = spec.grid_size;
        let nn = n * n;
        for (p, (r, c)) in self.agents.iter().enumerate() {
            out[p * nn + r * n + c] = 1.0;
        }
        for (r, c) in &self.resources {
            out[2 * nn + r * n + c] = 1.0;
        }
        out[3 * nn + self.to_move] = 1.0;
        let span = 2.0 * spec.resource_count as f64;
        out[3 * nn + 2] = (self.diff() as f64 + spec.resource_count as f64) / span;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn spawn_is_disjoint() {
        let spec = GameSpec::resource_grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = ResourceState::spawn(&spec, &mut rng);
            assert_eq!(s.resources.len(), 4);
            for r in &s.resources {
                assert!(!s.agents.contains(r));
            }
            assert_ne!(s.agents[0], s.agents[1]);
        }
    }

    #[test]
    fn collecting_and_scoring() {
        let spec = GameSpec::resource_grid();
        let mut s = ResourceState::from_parts([(0, 0), (3, 3)], vec![(0, 1), (3, 2), (1, 1), (2, 2)]);
        s.apply(&spec, Action::Right);
        assert_eq!(s.collected(), [1, 0]);
        s.apply(&spec, Action::Left);
        s.apply(&spec, Action::Down);
        s.apply(&spec, Action::Up);
        assert_eq!(s.collected(), [2, 2]);
        assert_eq!(s.returns(), Some([0.0, 0.0]));
    }

    #[test]
    fn step_limit_ends_episode() {
        let spec = GameSpec::resource_grid();
        let mut s = ResourceState::from_parts([(0, 0), (0, 1)], vec![(3, 3), (3, 2), (2, 3), (2, 2)]);
        for i in 0..spec.max_steps {
            assert!(s.returns().is_none(), "ended early at {i}");
            s.apply(&spec, Action::Up);
        }
        assert_eq!(s.returns(), Some([0.0, 0.0]));
    }
}

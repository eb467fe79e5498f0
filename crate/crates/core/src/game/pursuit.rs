//! Turn-based predator/prey pursuit on a square grid.
//!
//! Player 0 is the prey and moves first; player 1 is the predator. The goal
//! sits in the bottom-right corner. The prey wins (+1) by stepping onto it,
//! loses (-1) when the predator ends its move on the prey's cell, and the
//! episode is a draw once the move limit is reached.

use rand::Rng;

use super::{Action, ActionSet, GameSpec, ToMove};

pub(super) const ACTIONS: ActionSet = ActionSet(
    (1 << Action::Up as u16)
        | (1 << Action::Down as u16)
        | (1 << Action::Left as u16)
        | (1 << Action::Right as u16)
        | (1 << Action::Stay as u16),
);

pub(super) fn feature_dim(size: usize) -> usize {
    2 * size * size + 2
}

pub(super) type Cell = (usize, usize);

pub(super) fn moved(cell: Cell, action: Action, size: usize) -> Cell {
    let (r, c) = cell;
    match action {
        Action::Up => (r.saturating_sub(1), c),
        Action::Down => ((r + 1).min(size - 1), c),
        Action::Left => (r, c.saturating_sub(1)),
        Action::Right => (r, (c + 1).min(size - 1)),
        _ => cell,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PursuitState {
    prey: Cell,
    predator: Cell,
    goal: Cell,
    to_move: usize,
    steps: u32,
    history: Vec<Action>,
    outcome: Option<f64>,
}

impl PursuitState {
    pub(super) fn spawn<R: Rng + ?Sized>(spec: &GameSpec, rng: &mut R) -> Self {
        let n = spec.grid_size;
        let goal = (n - 1, n - 1);
        let free: Vec<Cell> = (0..n * n).map(|i| (i / n, i % n)).filter(|c| *c != goal).collect();
        let picked = rand::seq::index::sample(rng, free.len(), 2);
        Self::from_cells(free[picked.index(0)], free[picked.index(1)], n)
    }

    pub fn from_cells(prey: Cell, predator: Cell, size: usize) -> Self {
        PursuitState {
            prey,
            predator,
            goal: (size - 1, size - 1),
            to_move: 0,
            steps: 0,
            history: Vec::new(),
            outcome: None,
        }
    }

    pub fn prey(&self) -> Cell {
        self.prey
    }

    pub fn predator(&self) -> Cell {
        self.predator
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub(super) fn history(&self) -> &[Action] {
        &self.history
    }

    pub(super) fn to_move(&self) -> ToMove {
        if self.outcome.is_some() {
            ToMove::Terminal
        } else {
            ToMove::Player(self.to_move)
        }
    }

    pub(super) fn apply(&mut self, spec: &GameSpec, action: Action) {
        let n = spec.grid_size;
        self.history.push(action);
        self.steps += 1;
        if self.to_move == 0 {
            self.prey = moved(self.prey, action, n);
            if self.prey == self.goal {
                self.outcome = Some(1.0);
                return;
            }
        } else {
            self.predator = moved(self.predator, action, n);
            if self.predator == self.prey {
                self.outcome = Some(-1.0);
                return;
            }
        }
        if self.steps >= spec.max_steps {
            self.outcome = Some(0.0);
        }
        self.to_move = 1 - self.to_move;
    }

    pub(super) fn returns(&self) -> Option<[f64; 2]> {
        self.outcome.map(|r| [r, -r])
    }

    pub(super) fn info_key(&self) -> String {
        format!(
            "{},{};{},{};{}",
            self.prey.0, self.prey.1, self.predator.0, self.predator.1, self.to_move
        )
    }

    pub(super) fn featurize(&self, spec: &GameSpec, out: &mut [f64]) {
        let n = spec.grid_size;
        out[self.prey.0 * n + self.prey.1] = 1.0;
        out[n * n + self.predator.0 * n + self.predator.1] = 1.0;
        out[2 * n * n + self.to_move] = 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn spawn_places_distinct_cells_off_goal() {
        let spec = GameSpec::gridworld();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let s = PursuitState::spawn(&spec, &mut rng);
            assert_ne!(s.prey, s.predator);
            assert_ne!(s.prey, s.goal);
            assert_ne!(s.predator, s.goal);
            assert_eq!(s.to_move(), ToMove::Player(0));
        }
    }

    #[test]
    fn walls_block_movement() {
        assert_eq!(moved((0, 0), Action::Up, 5), (0, 0));
        assert_eq!(moved((0, 0), Action::Left, 5), (0, 0));
        assert_eq!(moved((4, 4), Action::Down, 5), (4, 4));
        assert_eq!(moved((2, 2), Action::Right, 5), (2, 3));
    }

    #[test]
    fn prey_reaches_goal() {
        let spec = GameSpec::gridworld();
        let mut s = PursuitState::from_cells((3, 4), (0, 0), 5);
        s.apply(&spec, Action::Down);
        assert_eq!(s.returns(), Some([1.0, -1.0]));
    }

    #[test]
    fn capture_happens_on_predator_move() {
        let spec = GameSpec::gridworld();
        let mut s = PursuitState::from_cells((2, 2), (2, 4), 5);
        s.apply(&spec, Action::Right);
        assert_eq!(s.returns(), None);
        s.apply(&spec, Action::Left);
        assert_eq!(s.returns(), Some([-1.0, 1.0]));
    }

    #[test]
    fn step_limit_draws() {
        let spec = GameSpec::gridworld();
        let mut s = PursuitState::from_cells((0, 0), (0, 4), 5);
        for _ in 0..spec.max_steps {
            assert!(s.returns().is_none());
            s.apply(&spec, Action::Stay);
        }
        assert_eq!(s.returns(), Some([0.0, 0.0]));
    }
}

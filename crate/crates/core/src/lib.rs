//! Adversarial action-removal attacks on self-play reinforcement learning.
//!
//! An attacker removes legal actions from player 0's action set before it
//! chooses. This crate provides the environments, the victim learners
//! (tabular and neural), learned and heuristic masking adversaries, the
//! bi-level training harness, capacity metrics, and an experiment registry.

pub mod adversary;
pub mod agent;
pub mod experiments;
pub mod game;
pub mod harness;
pub mod mask;
pub mod metrics;
pub mod neural;
pub mod nn;
pub mod tabular;

pub use agent::{ActMode, Agent, Observation, SimRng};
pub use game::{Action, ActionSet, EpisodeState, Game, GameKind, GameSpec};
pub use mask::{MaskStrategy, MaskTable};

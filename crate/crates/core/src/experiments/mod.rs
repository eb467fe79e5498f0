//! Experiment registry, configuration and runners.

pub mod config;
pub mod plot;
pub mod protocol;
pub mod registry;
pub mod runner;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use runner::{run_experiment, ConditionSummary, Report};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}`; `list` shows the registered ids")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("bad override: {0}")]
    Override(String),
    #[error("no run records under {0}")]
    MissingInputs(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    #[error(transparent)]
    Mask(#[from] crate::mask::MaskError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Stats(#[from] crate::metrics::StatsError),
}

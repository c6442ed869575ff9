//! Episode and batch runner: the composed shared-control loop, simulated
//! episodes and rounds, metrics, experiment configs and log persistence.

mod episode;
mod experiment;
mod log;
mod metrics;
mod pipeline;

pub use episode::{
    run_episode, run_round, run_with_source, EpisodeConfig, InputSource, ScriptedInput,
    SimulatedOperator, DEFAULT_MAX_FAILURES, DEFAULT_MAX_TICKS,
};
pub use experiment::{
    load_logs, log_file_name, log_files, run_experiment, BatchResult, ExperimentConfig,
    GraspChoice, OperatorProfile,
};
pub use log::{EpisodeHeader, EpisodeLog, Outcome, CODE_VERSION};
pub use metrics::{
    acceptance, bootstrap_mean_ci, completion_effort, idle_ticks, summarize, CellSummary, Stats,
    Summary,
};
pub use pipeline::{SharedControl, TickInput, TickRecord};

use thiserror::Error;

use crate::inference::InferenceError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metric needs a successful episode")]
    NotSuccessful,
    #[error("no episodes to summarize")]
    EmptyBatch,
    #[error("malformed episode log: {0}")]
    MalformedLog(String),
    #[error("replay diverged: {0}")]
    ReplayMismatch(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

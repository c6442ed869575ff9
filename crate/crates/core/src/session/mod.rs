//! Live sessions: the same tick pipeline as batch episodes, driven by a
//! human's control input and reporting state plus visualization payloads
//! over a message protocol. Transport lives in the service crate.

mod protocol;
mod state;
mod visual;

pub use protocol::{
    ClientMessage, ControlInput, EngagementView, ErrorCode, LiveMetrics, NextStep, ServerMessage,
    StateUpdate,
};
pub use state::{SessionConfig, SessionState, LIVE_PROFILE};
pub use visual::{
    sphere_radius, GoalSphere, VisualizationCondition, VisualizationPayload, SPHERE_MARGIN,
};

use thiserror::Error;

use crate::harness::{EpisodeLog, HarnessError};
use crate::workspace::{ControlMode, WorldConfig};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("episode is over; send NextObject or RestartRound")]
    SessionClosed,
    #[error("round complete; send RestartRound to go again")]
    RoundComplete,
    #[error("malformed message: {0}")]
    Protocol(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl SessionError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SessionError::SessionClosed | SessionError::RoundComplete => ErrorCode::SessionClosed,
            SessionError::Protocol(_) => ErrorCode::Protocol,
            SessionError::InvalidConfig(_) => ErrorCode::InvalidConfig,
            SessionError::NotFound(_) => ErrorCode::NotFound,
            SessionError::Harness(HarnessError::Config(_)) => ErrorCode::InvalidConfig,
            SessionError::Harness(_) => ErrorCode::Internal,
        }
    }
}

/// The control inputs a client would send to reproduce a logged episode's
/// operator commands, starting from position mode.
pub fn script_from_log(log: &EpisodeLog, world: &WorldConfig) -> Vec<ControlInput> {
    let mut mode = ControlMode::Position;
    log.records
        .iter()
        .map(|r| {
            let toggle_mode = r.mode != mode;
            mode = r.mode;
            let axes = r.u_h_raw.axes(mode) / world.limits.magnitude(mode);
            ControlInput {
                axes: axes.into(),
                toggle_mode,
            }
        })
        .collect()
}

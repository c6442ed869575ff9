//! Wire messages. Every message is a JSON object with a `type` tag and a
//! `tick` field; see `docs/protocol.md` for the full schema.

use serde::{Deserialize, Serialize};

use super::visual::{VisualizationCondition, VisualizationPayload};
use super::SessionError;
use crate::harness::{EpisodeLog, Outcome};
use crate::workspace::{Action, ActionLimits, ControlMode, Pose, Scenario};

/// Operator input for one tick: the active mode's three axes, each in
/// [-1, 1], and whether to flip the control mode before applying them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    #[serde(default)]
    pub axes: [f64; 3],
    #[serde(default)]
    pub toggle_mode: bool,
}

impl ControlInput {
    pub fn idle() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.axes.iter().all(|a| a.is_finite() && a.abs() <= 1.0) {
            Ok(())
        } else {
            Err(SessionError::Protocol(format!(
                "axes must lie in [-1, 1], got {:?}",
                self.axes
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ClientMessage {
    ControlInput {
        #[serde(default)]
        tick: Option<u64>,
        #[serde(default)]
        axes: [f64; 3],
        #[serde(default)]
        toggle_mode: bool,
    },
    SetConfig {
        #[serde(default)]
        tick: Option<u64>,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        condition: Option<VisualizationCondition>,
    },
    NextObject {
        #[serde(default)]
        tick: Option<u64>,
    },
    RestartRound {
        #[serde(default)]
        tick: Option<u64>,
    },
    RequestLog {
        #[serde(default)]
        tick: Option<u64>,
        /// Completed episode index; the latest when absent.
        #[serde(default)]
        index: Option<usize>,
    },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        let msg: Self =
            serde_json::from_str(text).map_err(|e| SessionError::Protocol(e.to_string()))?;
        if let Some(input) = msg.control_input() {
            input.validate()?;
        }
        Ok(msg)
    }

    pub fn control(input: ControlInput) -> Self {
        ClientMessage::ControlInput {
            tick: None,
            axes: input.axes,
            toggle_mode: input.toggle_mode,
        }
    }

    pub fn control_input(&self) -> Option<ControlInput> {
        match *self {
            ClientMessage::ControlInput {
                axes, toggle_mode, ..
            } => Some(ControlInput { axes, toggle_mode }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementView {
    pub goal_id: Option<String>,
    pub grasp_id: Option<String>,
    pub next_keypoint: usize,
    pub remaining_keypoints: usize,
}

/// Running metrics of the current episode plus session totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub ticks: u64,
    pub effort: u64,
    pub idle_ticks: u64,
    /// Idle share of the episode so far, in percent.
    pub acceptance: f64,
    pub episodes_completed: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub tick: u64,
    pub episode_tick: u64,
    pub object: String,
    pub object_label: String,
    pub attempt: u32,
    pub mode: ControlMode,
    pub alpha: f64,
    pub condition: VisualizationCondition,
    pub pose: Pose,
    pub goal_posterior: Vec<f64>,
    pub engagement: EngagementView,
    pub u_h: Action,
    /// The assistive command before blending.
    pub u_r: Action,
    pub u_star: Action,
    pub visualization: VisualizationPayload,
    pub metrics: LiveMetrics,
}

/// What the session does after an episode ends, once the client sends
/// `NextObject`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextStep {
    Retry,
    NextObject,
    RoundComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Protocol,
    SessionClosed,
    InvalidConfig,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    SessionInfo {
        tick: u64,
        /// Set by hosts that can resume a dropped connection.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<u64>,
        scenario: Box<Scenario>,
        objects: Vec<String>,
        rate_hz: f64,
        limits: ActionLimits,
        deadzone_fraction: f64,
        alpha: f64,
        condition: VisualizationCondition,
    },
    EpisodeStart {
        tick: u64,
        episode: usize,
        object: String,
        object_label: String,
        attempt: u32,
        mode: ControlMode,
    },
    StateUpdate(Box<StateUpdate>),
    EpisodeEnd {
        tick: u64,
        episode: usize,
        object: String,
        attempt: u32,
        outcome: Outcome,
        effort: Option<u64>,
        acceptance: Option<f64>,
        next: NextStep,
    },
    ConfigUpdated {
        tick: u64,
        alpha: f64,
        condition: VisualizationCondition,
    },
    EpisodeLog {
        tick: u64,
        episode: usize,
        log: Box<EpisodeLog>,
    },
    Error {
        tick: u64,
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn tick(&self) -> u64 {
        match self {
            ServerMessage::StateUpdate(u) => u.tick,
            ServerMessage::SessionInfo { tick, .. }
            | ServerMessage::EpisodeStart { tick, .. }
            | ServerMessage::EpisodeEnd { tick, .. }
            | ServerMessage::ConfigUpdated { tick, .. }
            | ServerMessage::EpisodeLog { tick, .. }
            | ServerMessage::Error { tick, .. } => *tick,
        }
    }

    pub fn error(tick: u64, e: &SessionError) -> Self {
        ServerMessage::Error {
            tick,
            code: e.code(),
            message: e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_client_messages() {
        let m = ClientMessage::parse(
            r#"{"type":"ControlInput","tick":3,"axes":[1,0,-0.5],"toggle_mode":true}"#,
        )
        .unwrap();
        assert_eq!(
            m,
            ClientMessage::ControlInput {
                tick: Some(3),
                axes: [1.0, 0.0, -0.5],
                toggle_mode: true
            }
        );
        let m = ClientMessage::parse(r#"{"type":"ControlInput"}"#).unwrap();
        assert_eq!(m, ClientMessage::control(ControlInput::idle()));
        let m = ClientMessage::parse(r#"{"type":"SetConfig","alpha":0.5,"condition":"goal_only"}"#)
            .unwrap();
        assert_eq!(
            m,
            ClientMessage::SetConfig {
                tick: None,
                alpha: Some(0.5),
                condition: Some(VisualizationCondition::GoalOnly)
            }
        );
        for t in ["NextObject", "RestartRound", "RequestLog"] {
            ClientMessage::parse(&format!(r#"{{"type":"{t}","tick":0}}"#)).unwrap();
        }
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "not json",
            "{}",
            r#"{"type":"Teleport"}"#,
            r#"{"type":"ControlInput","axes":[1,2]}"#,
            r#"{"type":"ControlInput","axes":[2,0,0]}"#,
            r#"{"type":"ControlInput","axes":"up"}"#,
            r#"{"type":"SetConfig","condition":"sparkles"}"#,
            r#"{"type":"NextObject","please":true}"#,
        ] {
            assert!(
                matches!(ClientMessage::parse(bad), Err(SessionError::Protocol(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn server_messages_carry_type_and_tick() {
        let e = ServerMessage::error(7, &SessionError::SessionClosed);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["type"], "Error");
        assert_eq!(v["tick"], 7);
        assert_eq!(v["code"], "session_closed");
        let back: ServerMessage = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(back, e);
    }
}

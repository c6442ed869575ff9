//! Linear arbitration between operator and assistive commands.

use serde::{Deserialize, Serialize};

use crate::assist::AssistStyle;
use crate::workspace::{Action, ActionLimits, ControlMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Weight on the assistive command; 0 is pure teleoperation.
    pub alpha: f64,
    pub assist_enabled: bool,
    /// Let assistance act on all six axes rather than only the active mode's.
    pub assist_full_axes: bool,
    pub assist_style: AssistStyle,
    pub threshold: f64,
    pub hysteresis: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            assist_enabled: true,
            assist_full_axes: true,
            assist_style: AssistStyle::Continuous,
            threshold: 0.5,
            hysteresis: 0.0,
        }
    }
}

impl ControllerConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.alpha)
            && (0.0..=1.0).contains(&self.threshold)
            && self.hysteresis >= 0.0
    }

    /// The assistive command as it enters the blend.
    pub fn shape_assist(&self, u_r: &Action, mode: ControlMode) -> Action {
        if !self.assist_enabled {
            Action::null()
        } else if self.assist_full_axes {
            *u_r
        } else {
            u_r.restricted_to(mode)
        }
    }
}

/// `alpha * u_r + (1 - alpha) * u_h` on all six axes, clamped to `limits`.
pub fn blend(u_h: &Action, u_r: &Action, alpha: f64, limits: &ActionLimits) -> Action {
    debug_assert!((0.0..=1.0).contains(&alpha));
    if alpha == 0.0 {
        return u_h.clamped(limits);
    }
    if alpha == 1.0 {
        return u_r.clamped(limits);
    }
    Action::new(
        u_r.linear * alpha + u_h.linear * (1.0 - alpha),
        u_r.angular * alpha + u_h.angular * (1.0 - alpha),
    )
    .clamped(limits)
}

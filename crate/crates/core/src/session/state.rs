use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::protocol::{
    ClientMessage, ControlInput, EngagementView, LiveMetrics, NextStep, ServerMessage, StateUpdate,
};
use super::visual::{VisualizationCondition, VisualizationPayload};
use super::SessionError;
use crate::arbitration::ControllerConfig;
use crate::harness::{
    acceptance, completion_effort, EpisodeConfig, EpisodeHeader, EpisodeLog, HarnessError, Outcome,
    SharedControl, TickInput, TickRecord, DEFAULT_MAX_FAILURES, DEFAULT_MAX_TICKS,
};
use crate::inference::HmmParams;
use crate::workspace::{Action, ControlMode, Scenario, WorldConfig};

/// Profile name recorded in the headers of live episodes.
pub const LIVE_PROFILE: &str = "live";

fn default_max_ticks() -> u64 {
    DEFAULT_MAX_TICKS
}
fn default_max_failures() -> u32 {
    DEFAULT_MAX_FAILURES
}
fn default_rate() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub hmm: HmmParams,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub condition: VisualizationCondition,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default = "default_max_failures")]
    pub max_failures_per_object: u32,
    /// Goal ids in the order the operator is asked to grasp them; all goals
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<String>>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            hmm: HmmParams::default(),
            world: WorldConfig::default(),
            condition: VisualizationCondition::default(),
            max_ticks: DEFAULT_MAX_TICKS,
            max_failures_per_object: DEFAULT_MAX_FAILURES,
            objects: None,
            rate_hz: default_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Running,
    Ended(NextStep),
}

/// One operator's live session: a sequence of episodes, one per object,
/// driven tick by tick. All methods are deterministic.
#[derive(Debug, Clone)]
pub struct SessionState {
    scenario: Arc<Scenario>,
    cfg: SessionConfig,
    objects: Vec<usize>,
    slot: usize,
    attempts: Vec<u32>,
    ctl: SharedControl,
    header: EpisodeHeader,
    records: Vec<TickRecord>,
    mode: ControlMode,
    condition: VisualizationCondition,
    phase: Phase,
    clock: u64,
    completed: Vec<EpisodeLog>,
}

impl SessionState {
    pub fn new(scenario: Arc<Scenario>, cfg: SessionConfig) -> Result<Self, SessionError> {
        let invalid = |m: String| SessionError::InvalidConfig(m);
        if !cfg.controller.is_valid() {
            return Err(invalid("controller settings out of range".into()));
        }
        cfg.hmm.validate().map_err(|e| invalid(e.to_string()))?;
        if cfg.max_ticks == 0 || cfg.max_failures_per_object == 0 {
            return Err(invalid(
                "max_ticks and max_failures_per_object must be positive".into(),
            ));
        }
        if !(cfg.rate_hz > 0.0 && cfg.rate_hz.is_finite()) {
            return Err(invalid(format!(
                "rate_hz must be positive, got {}",
                cfg.rate_hz
            )));
        }
        let objects: Vec<usize> = match &cfg.objects {
            None => (0..scenario.num_goals()).collect(),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    scenario
                        .goal_index(id)
                        .ok_or_else(|| invalid(format!("unknown object `{id}`")))
                })
                .collect::<Result<_, _>>()?,
        };
        if objects.is_empty() {
            return Err(invalid("no objects to grasp".into()));
        }
        let header = episode_header(&scenario, &cfg, cfg.controller.alpha, objects[0], 0);
        let ctl = SharedControl::new(scenario.clone(), header.controller, cfg.hmm, cfg.world)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            attempts: vec![0; objects.len()],
            condition: cfg.condition,
            scenario,
            cfg,
            objects,
            slot: 0,
            ctl,
            header,
            records: Vec::new(),
            mode: ControlMode::Position,
            phase: Phase::Running,
            clock: 0,
            completed: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Session ticks executed so far; never decreases.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn alpha(&self) -> f64 {
        self.ctl.controller().alpha
    }

    pub fn condition(&self) -> VisualizationCondition {
        self.condition
    }

    pub fn is_running(&self) -> bool {
        self.phase == Phase::Running
    }

    pub fn current_object(&self) -> usize {
        self.objects[self.slot]
    }

    pub fn attempts(&self) -> &[u32] {
        &self.attempts
    }

    pub fn completed(&self) -> &[EpisodeLog] {
        &self.completed
    }

    pub fn current_records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn info(&self) -> ServerMessage {
        ServerMessage::SessionInfo {
            tick: self.clock,
            session_id: None,
            scenario: Box::new((*self.scenario).clone()),
            objects: self
                .objects
                .iter()
                .map(|&g| self.scenario.goals[g].id.clone())
                .collect(),
            rate_hz: self.cfg.rate_hz,
            limits: self.cfg.world.limits,
            deadzone_fraction: self.cfg.world.deadzone_fraction,
            alpha: self.alpha(),
            condition: self.condition,
        }
    }

    pub fn episode_start(&self) -> ServerMessage {
        let goal = &self.scenario.goals[self.current_object()];
        ServerMessage::EpisodeStart {
            tick: self.clock,
            episode: self.completed.len(),
            object: goal.id.clone(),
            object_label: goal.label.clone(),
            attempt: self.attempts[self.slot],
            mode: self.mode,
        }
    }

    /// The raw command a control input stands for in the current mode.
    pub fn command(&self, input: &ControlInput) -> TickInput {
        let mode = if input.toggle_mode {
            self.mode.toggled()
        } else {
            self.mode
        };
        let m = self.ctl.world().magnitude(mode);
        let axes = nalgebra::Vector3::from(input.axes) * m;
        TickInput::new(mode, Action::on_axes(mode, axes), self.current_object())
    }

    /// Advances the running episode by one tick.
    ///
    /// Returns the tick's `StateUpdate`, followed by an `EpisodeEnd` when the
    /// tick finished the episode.
    pub fn session_tick(
        &mut self,
        input: &ControlInput,
    ) -> Result<Vec<ServerMessage>, SessionError> {
        if !self.is_running() {
            return Err(SessionError::SessionClosed);
        }
        input.validate()?;
        let tick_input = self.command(input);
        self.step_input(&tick_input)
    }

    /// Advances the running episode with an already-formed command.
    pub fn step_input(&mut self, input: &TickInput) -> Result<Vec<ServerMessage>, SessionError> {
        if !self.is_running() {
            return Err(SessionError::SessionClosed);
        }
        if input.target_goal != self.current_object() {
            return Err(SessionError::Protocol(
                "input targets a different object".into(),
            ));
        }
        let rec = self.ctl.step(input)?;
        self.mode = input.mode;
        let update = self.state_update(&rec);
        let grasped = rec.grasped;
        self.records.push(rec);
        self.clock += 1;
        let mut out = vec![ServerMessage::StateUpdate(Box::new(update))];
        let ticks = self.records.len() as u64;
        if let Some(i) = grasped {
            let grasp_id = self.scenario.grasp(i).id.clone();
            out.push(self.finish(Outcome::Success { grasp_id, ticks }));
        } else if ticks >= self.cfg.max_ticks {
            out.push(self.finish(Outcome::Timeout { ticks }));
        }
        Ok(out)
    }

    fn state_update(&self, rec: &TickRecord) -> StateUpdate {
        let scenario = &*self.scenario;
        let e = &rec.engagement;
        let idle = self
            .records
            .iter()
            .chain(std::iter::once(rec))
            .filter(|r| r.is_idle())
            .count() as u64;
        let ticks = self.records.len() as u64 + 1;
        let goal = &scenario.goals[self.current_object()];
        StateUpdate {
            tick: self.clock,
            episode_tick: rec.tick,
            object: goal.id.clone(),
            object_label: goal.label.clone(),
            attempt: self.attempts[self.slot],
            mode: rec.mode,
            alpha: rec.alpha,
            condition: self.condition,
            pose: rec.pose,
            goal_posterior: rec.goal_posterior.probs().to_vec(),
            engagement: EngagementView {
                goal_id: e.engaged.map(|t| scenario.goals[t.goal].id.clone()),
                grasp_id: e.grasp(scenario).map(|g| g.id.clone()),
                next_keypoint: e.next_keypoint,
                remaining_keypoints: e.remaining_keypoints(scenario).len(),
            },
            u_h: rec.u_h_snapped,
            u_r: rec.u_r,
            u_star: rec.u_star,
            visualization: VisualizationPayload::build(e, scenario, self.condition),
            metrics: LiveMetrics {
                ticks,
                effort: ticks - idle,
                idle_ticks: idle,
                acceptance: 100.0 * idle as f64 / ticks as f64,
                episodes_completed: self.completed.len(),
                successes: self
                    .completed
                    .iter()
                    .filter(|l| l.outcome.is_success())
                    .count(),
            },
        }
    }

    fn finish(&mut self, outcome: Outcome) -> ServerMessage {
        let failed = !outcome.is_success();
        if failed {
            self.attempts[self.slot] += 1;
        }
        let log = EpisodeLog {
            header: self.header.clone(),
            records: std::mem::take(&mut self.records),
            outcome: outcome.clone(),
        };
        let (effort, accept) = (completion_effort(&log).ok(), acceptance(&log).ok());
        let attempt = log.header.attempt;
        let object = log.header.object.clone();
        self.completed.push(log);
        let exhausted = failed && self.attempts[self.slot] >= self.cfg.max_failures_per_object;
        if exhausted {
            self.completed.push(EpisodeLog {
                header: EpisodeHeader {
                    attempt: self.attempts[self.slot],
                    ..self.header.clone()
                },
                records: Vec::new(),
                outcome: Outcome::Skipped,
            });
        }
        let next = if failed && !exhausted {
            NextStep::Retry
        } else if self.slot + 1 < self.objects.len() {
            NextStep::NextObject
        } else {
            NextStep::RoundComplete
        };
        self.phase = Phase::Ended(next);
        ServerMessage::EpisodeEnd {
            tick: self.clock,
            episode: self.completed.len() - 1 - usize::from(exhausted),
            object,
            attempt,
            outcome,
            effort,
            acceptance: accept,
            next,
        }
    }

    fn start_episode(&mut self) -> Result<(), SessionError> {
        let object = self.current_object();
        self.header = episode_header(
            &self.scenario,
            &self.cfg,
            self.alpha(),
            object,
            self.attempts[self.slot],
        );
        self.ctl = SharedControl::new(
            self.scenario.clone(),
            self.header.controller,
            self.cfg.hmm,
            self.cfg.world,
        )
        .map_err(HarnessError::from)?;
        self.records.clear();
        self.mode = ControlMode::Position;
        self.phase = Phase::Running;
        Ok(())
    }

    /// Moves on: retries a timed-out object, or starts the next one. An
    /// episode still running is abandoned and logged as skipped.
    pub fn next_object(&mut self) -> Result<ServerMessage, SessionError> {
        match self.phase {
            Phase::Running => {
                self.completed.push(EpisodeLog {
                    header: self.header.clone(),
                    records: std::mem::take(&mut self.records),
                    outcome: Outcome::Skipped,
                });
                if self.slot + 1 >= self.objects.len() {
                    self.phase = Phase::Ended(NextStep::RoundComplete);
                    return Err(SessionError::RoundComplete);
                }
                self.slot += 1;
            }
            Phase::Ended(NextStep::Retry) => {}
            Phase::Ended(NextStep::NextObject) => self.slot += 1,
            Phase::Ended(NextStep::RoundComplete) => return Err(SessionError::RoundComplete),
        }
        self.start_episode()?;
        Ok(self.episode_start())
    }

    /// Starts over from the first object. Completed logs are kept.
    pub fn restart_round(&mut self) -> Result<ServerMessage, SessionError> {
        self.slot = 0;
        self.attempts.iter_mut().for_each(|a| *a = 0);
        self.start_episode()?;
        Ok(self.episode_start())
    }

    pub fn set_config(
        &mut self,
        alpha: Option<f64>,
        condition: Option<VisualizationCondition>,
    ) -> Result<ServerMessage, SessionError> {
        if let Some(a) = alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(SessionError::InvalidConfig(format!(
                    "alpha {a} outside [0, 1]"
                )));
            }
        }
        if let Some(a) = alpha {
            self.ctl.set_alpha(a);
        }
        if let Some(c) = condition {
            self.condition = c;
        }
        Ok(ServerMessage::ConfigUpdated {
            tick: self.clock,
            alpha: self.alpha(),
            condition: self.condition,
        })
    }

    pub fn episode_log(&self, index: Option<usize>) -> Result<ServerMessage, SessionError> {
        let i = match index {
            Some(i) => i,
            None => self
                .completed
                .len()
                .checked_sub(1)
                .ok_or(SessionError::NotFound("no completed episodes".into()))?,
        };
        let log = self
            .completed
            .get(i)
            .ok_or_else(|| SessionError::NotFound(format!("episode {i}")))?;
        Ok(ServerMessage::EpisodeLog {
            tick: self.clock,
            episode: i,
            log: Box::new(log.clone()),
        })
    }

    /// Applies one client message. Failures become an `Error` reply; the
    /// session itself is never invalidated.
    pub fn handle_client_message(&mut self, msg: &ClientMessage) -> Vec<ServerMessage> {
        let result = match msg {
            ClientMessage::ControlInput { .. } => {
                self.session_tick(&msg.control_input().expect("control input"))
            }
            ClientMessage::SetConfig {
                alpha, condition, ..
            } => self.set_config(*alpha, *condition).map(|m| vec![m]),
            ClientMessage::NextObject { .. } => self.next_object().map(|m| vec![m]),
            ClientMessage::RestartRound { .. } => self.restart_round().map(|m| vec![m]),
            ClientMessage::RequestLog { index, .. } => self.episode_log(*index).map(|m| vec![m]),
        };
        result.unwrap_or_else(|e| vec![ServerMessage::error(self.clock, &e)])
    }

    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match ClientMessage::parse(text) {
            Ok(msg) => self.handle_client_message(&msg),
            Err(e) => vec![ServerMessage::error(self.clock, &e)],
        }
    }
}

fn episode_header(
    scenario: &Scenario,
    cfg: &SessionConfig,
    alpha: f64,
    object: usize,
    attempt: u32,
) -> EpisodeHeader {
    let episode = EpisodeConfig {
        scenario_id: scenario.name.clone(),
        controller: ControllerConfig {
            alpha,
            ..cfg.controller
        },
        hmm: cfg.hmm,
        world: cfg.world,
        max_ticks: cfg.max_ticks,
    };
    EpisodeHeader {
        object: scenario.goals[object].id.clone(),
        ..episode.header(scenario, None, LIVE_PROFILE, attempt)
    }
}

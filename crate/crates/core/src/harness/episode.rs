use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::log::{EpisodeHeader, EpisodeLog, Outcome, CODE_VERSION};
use super::pipeline::{SharedControl, TickInput};
use super::HarnessError;
use crate::arbitration::ControllerConfig;
use crate::inference::HmmParams;
use crate::operator::{mode_policy, operator_act, OperatorConfig, OperatorState, RNG_ALGORITHM};
use crate::workspace::{Scenario, WorldConfig};

pub const DEFAULT_MAX_TICKS: u64 = 2400;
pub const DEFAULT_MAX_FAILURES: u32 = 4;

/// Supplies operator input one tick at a time. `None` ends the episode.
pub trait InputSource {
    fn next_input(&mut self, ctl: &SharedControl) -> Option<TickInput>;
}

/// A fixed input stream, e.g. one recorded in a log.
#[derive(Debug, Clone)]
pub struct ScriptedInput {
    inputs: std::vec::IntoIter<TickInput>,
}

impl ScriptedInput {
    pub fn new(inputs: Vec<TickInput>) -> Self {
        Self {
            inputs: inputs.into_iter(),
        }
    }
}

impl InputSource for ScriptedInput {
    fn next_input(&mut self, _: &SharedControl) -> Option<TickInput> {
        self.inputs.next()
    }
}

/// A simulated operator that picks its own control mode.
#[derive(Debug, Clone)]
pub struct SimulatedOperator {
    cfg: OperatorConfig,
    state: OperatorState,
}

impl SimulatedOperator {
    pub fn new(cfg: OperatorConfig, scenario: &Scenario) -> Result<Self, HarnessError> {
        let state =
            OperatorState::new(&cfg, scenario).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Self { cfg, state })
    }
}

impl InputSource for SimulatedOperator {
    fn next_input(&mut self, ctl: &SharedControl) -> Option<TickInput> {
        let scenario = ctl.scenario();
        let world = ctl.world();
        self.state.maybe_switch(&self.cfg, scenario, ctl.tick());
        let mode = mode_policy(
            &self.state,
            ctl.pose(),
            scenario,
            &world.config.grasp_tolerance,
        );
        let u = operator_act(
            &mut self.state,
            ctl.pose(),
            ctl.last_u_star(),
            scenario,
            world,
            &self.cfg,
            mode,
            ctl.tick(),
        );
        Some(TickInput::new(mode, u, self.state.intended_goal(scenario)))
    }
}

/// Per-episode settings shared by every episode of a batch cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub scenario_id: String,
    pub controller: ControllerConfig,
    pub hmm: HmmParams,
    pub world: WorldConfig,
    pub max_ticks: u64,
}

impl EpisodeConfig {
    pub fn new(scenario: &Scenario, controller: ControllerConfig, hmm: HmmParams) -> Self {
        Self {
            scenario_id: scenario.name.clone(),
            controller,
            hmm,
            world: WorldConfig::default(),
            max_ticks: DEFAULT_MAX_TICKS,
        }
    }

    pub fn header(
        &self,
        scenario: &Scenario,
        operator: Option<OperatorConfig>,
        profile: &str,
        attempt: u32,
    ) -> EpisodeHeader {
        let (object, seed) = match &operator {
            Some(op) => {
                let goal = scenario
                    .grasp_state_index(&op.intended_grasp_id)
                    .map(|i| scenario.goals[scenario.goal_of_state(i)].id.clone())
                    .unwrap_or_default();
                (goal, op.seed)
            }
            None => (String::new(), 0),
        };
        EpisodeHeader {
            scenario_id: self.scenario_id.clone(),
            scenario: scenario.clone(),
            controller: self.controller,
            hmm: self.hmm,
            world: self.world,
            max_ticks: self.max_ticks,
            operator,
            operator_profile: profile.to_string(),
            object,
            attempt,
            seed,
            rng: RNG_ALGORITHM.to_string(),
            code_version: CODE_VERSION.to_string(),
        }
    }
}

fn check_header(h: &EpisodeHeader) -> Result<(), HarnessError> {
    if !h.controller.is_valid() {
        return Err(HarnessError::Config(
            "controller settings out of range".into(),
        ));
    }
    h.hmm
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(op) = &h.operator {
        op.validate(&h.scenario)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    Ok(())
}

/// Runs the shared-control loop until a grasp of the tick's target goal
/// succeeds, the source runs dry, or `max_ticks` elapse.
pub fn run_with_source(
    scenario: Arc<Scenario>,
    header: EpisodeHeader,
    source: &mut dyn InputSource,
) -> Result<EpisodeLog, HarnessError> {
    check_header(&header)?;
    let mut ctl = SharedControl::new(scenario, header.controller, header.hmm, header.world)?;
    let mut records = Vec::new();
    let mut outcome = None;
    while (records.len() as u64) < header.max_ticks {
        let Some(input) = source.next_input(&ctl) else {
            break;
        };
        let rec = ctl.step(&input)?;
        let grasped = rec.grasped;
        records.push(rec);
        if let Some(i) = grasped {
            outcome = Some(Outcome::Success {
                grasp_id: ctl.scenario().grasp(i).id.clone(),
                ticks: records.len() as u64,
            });
            break;
        }
    }
    let outcome = outcome.unwrap_or(Outcome::Timeout {
        ticks: records.len() as u64,
    });
    Ok(EpisodeLog {
        header,
        records,
        outcome,
    })
}

/// One simulated-operator episode. The operator's seed drives all randomness.
pub fn run_episode(
    scenario: &Arc<Scenario>,
    cfg: &EpisodeConfig,
    operator: &OperatorConfig,
) -> Result<EpisodeLog, HarnessError> {
    run_attempt(scenario, cfg, operator, "", 0)
}

pub(crate) fn run_attempt(
    scenario: &Arc<Scenario>,
    cfg: &EpisodeConfig,
    operator: &OperatorConfig,
    profile: &str,
    attempt: u32,
) -> Result<EpisodeLog, HarnessError> {
    let header = cfg.header(scenario, Some(operator.clone()), profile, attempt);
    check_header(&header)?;
    let mut op = SimulatedOperator::new(operator.clone(), scenario)?;
    run_with_source(scenario.clone(), header, &mut op)
}

/// One attempt sequence per object. Objects that time out are retried with
/// a fresh operator from `make_operator(goal, attempt)`; after `max_failures`
/// timeouts a `Skipped` record closes the object and the round moves on.
///
/// Returns every attempt in order, so a round with all successes yields one
/// log per object.
pub fn run_round(
    scenario: &Arc<Scenario>,
    cfg: &EpisodeConfig,
    objects: &[usize],
    max_failures: u32,
    profile: &str,
    mut make_operator: impl FnMut(usize, u32) -> OperatorConfig,
) -> Result<Vec<EpisodeLog>, HarnessError> {
    if max_failures == 0 {
        return Err(HarnessError::Config(
            "max_failures_per_object must be at least 1".into(),
        ));
    }
    let mut logs = Vec::new();
    for &goal in objects {
        if goal >= scenario.num_goals() {
            return Err(HarnessError::Config(format!(
                "object index {goal} out of range"
            )));
        }
        let mut attempt = 0;
        loop {
            let op = make_operator(goal, attempt);
            let log = run_attempt(scenario, cfg, &op, profile, attempt)?;
            let success = log.outcome.is_success();
            let header = log.header.clone();
            logs.push(log);
            attempt += 1;
            if success {
                break;
            }
            if attempt >= max_failures {
                logs.push(EpisodeLog {
                    header: EpisodeHeader { attempt, ..header },
                    records: Vec::new(),
                    outcome: Outcome::Skipped,
                });
                break;
            }
        }
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::{Action, ControlMode};

    fn tabletop() -> Arc<Scenario> {
        Arc::new(Scenario::builtin("tabletop4").unwrap())
    }

    fn op(grasp: &str, beta: f64, p_idle: f64, seed: u64) -> OperatorConfig {
        OperatorConfig {
            intended_grasp_id: grasp.into(),
            beta_op: beta,
            p_idle_when_helped: p_idle,
            goal_switch_tick: None,
            switched_grasp_id: None,
            seed,
        }
    }

    #[test]
    fn pure_teleoperation_passes_input_through() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.0), HmmParams::default());
        let log = run_episode(&s, &cfg, &op("can_top", 40.0, 0.0, 1)).unwrap();
        assert!(log.outcome.is_success(), "{:?}", log.outcome);
        for r in &log.records {
            let u_h = r.u_h_raw.restricted_to(r.mode).clamped(&cfg.world.limits);
            assert_eq!(r.u_star, u_h);
        }
    }

    #[test]
    fn high_alpha_idle_operator_is_mostly_idle() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.99), HmmParams::default());
        let log = run_episode(&s, &cfg, &op("mug_side", 5.0, 1.0, 3)).unwrap();
        assert!(log.outcome.is_success(), "{:?}", log.outcome);
        let idle = log.records.iter().filter(|r| r.is_idle()).count();
        assert!(
            2 * idle > log.records.len(),
            "{idle} of {}",
            log.records.len()
        );
    }

    #[test]
    fn single_tick_budget_times_out() {
        let s = tabletop();
        let mut cfg =
            EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.5), HmmParams::default());
        cfg.max_ticks = 1;
        let log = run_episode(&s, &cfg, &op("mug_top", 5.0, 0.0, 1)).unwrap();
        assert_eq!(log.outcome, Outcome::Timeout { ticks: 1 });
        assert_eq!(log.records.len(), 1);
    }

    #[test]
    fn success_ends_on_a_grasp() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.5), HmmParams::default());
        for seed in 0..10 {
            let log = run_episode(&s, &cfg, &op("box_corner", 5.0, 0.5, seed)).unwrap();
            let last = log.records.last().unwrap();
            match &log.outcome {
                Outcome::Success { grasp_id, ticks } => {
                    assert_eq!(*ticks as usize, log.records.len());
                    let g = s.grasp(s.grasp_state_index(grasp_id).unwrap());
                    assert!(g.succeeded(&last.pose, &cfg.world.grasp_tolerance));
                    assert_eq!(g.goal_id, "box");
                }
                other => panic!("{other:?}"),
            }
            assert!(log.records.windows(2).all(|w| w[0].tick + 1 == w[1].tick));
        }
    }

    #[test]
    fn unknown_grasp_is_a_config_error() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::default(), HmmParams::default());
        assert!(matches!(
            run_episode(&s, &cfg, &op("teapot", 5.0, 0.0, 1)),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn same_seed_same_episode() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.25), HmmParams::default());
        let a = run_episode(&s, &cfg, &op("bottle_side", 3.0, 0.8, 9)).unwrap();
        let b = run_episode(&s, &cfg, &op("bottle_side", 3.0, 0.8, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_jsonl(), b.to_jsonl());
    }

    #[test]
    fn round_with_all_successes() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.5), HmmParams::default());
        let logs = run_round(&s, &cfg, &[0, 1, 2, 3], 4, "p", |g, a| {
            let grasp = s.grasp(s.class(g).start).id.clone();
            op(&grasp, 5.0, 0.8, (g as u64) * 16 + a as u64)
        })
        .unwrap();
        assert_eq!(logs.len(), 4);
        assert!(logs.iter().all(|l| l.outcome.is_success()));
        let objects: Vec<_> = logs.iter().map(|l| l.header.object.as_str()).collect();
        assert_eq!(objects, ["mug", "bottle", "box", "can"]);
    }

    #[test]
    fn round_skips_after_repeated_timeouts() {
        let s = tabletop();
        let mut cfg =
            EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.5), HmmParams::default());
        cfg.max_ticks = 30;
        // too few ticks for anything: every object times out four times
        let logs = run_round(&s, &cfg, &[0, 1], 4, "p", |g, a| {
            let grasp = s.grasp(s.class(g).start).id.clone();
            op(&grasp, 5.0, 0.0, a as u64)
        })
        .unwrap();
        assert_eq!(logs.len(), 10);
        for chunk in logs.chunks(5) {
            assert!(chunk[..4]
                .iter()
                .all(|l| matches!(l.outcome, Outcome::Timeout { ticks: 30 })));
            assert_eq!(chunk[4].outcome, Outcome::Skipped);
            let attempts: Vec<_> = chunk.iter().map(|l| l.header.attempt).collect();
            assert_eq!(attempts, [0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn scripted_source_stops_when_exhausted() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::default(), HmmParams::default());
        let inputs = vec![TickInput::new(ControlMode::Position, Action::null(), 0); 5];
        let log = run_with_source(
            s.clone(),
            cfg.header(&s, None, "", 0),
            &mut ScriptedInput::new(inputs),
        )
        .unwrap();
        assert_eq!(log.records.len(), 5);
        assert_eq!(log.outcome, Outcome::Timeout { ticks: 5 });
        assert!(log.records.iter().all(|r| r.pose == s.start_pose));
    }

    #[test]
    fn replay_reproduces_the_log() {
        let s = tabletop();
        let cfg = EpisodeConfig::new(&s, ControllerConfig::with_alpha(0.5), HmmParams::default());
        let mut o = op("mug_top", 3.0, 0.8, 5);
        o.goal_switch_tick = Some(20);
        o.switched_grasp_id = Some("mug_side".into());
        let log = run_episode(&s, &cfg, &o).unwrap();
        log.verify_replay().unwrap();
        let parsed = EpisodeLog::read_jsonl(&log.to_jsonl()[..]).unwrap();
        assert_eq!(parsed, log);
        parsed.verify_replay().unwrap();
    }
}

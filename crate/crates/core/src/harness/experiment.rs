use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_round, EpisodeConfig, DEFAULT_MAX_FAILURES, DEFAULT_MAX_TICKS};
use super::log::EpisodeLog;
use super::metrics::{summarize, Summary};
use super::HarnessError;
use crate::arbitration::ControllerConfig;
use crate::inference::HmmParams;
use crate::operator::OperatorConfig;
use crate::workspace::{Scenario, WorldConfig};

/// Which grasp of an object a simulated operator aims at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspChoice {
    /// Uniformly at random per episode.
    #[default]
    Random,
    /// Always the first grasp listed for the object.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorProfile {
    pub name: String,
    pub beta_op: f64,
    pub p_idle_when_helped: f64,
    #[serde(default)]
    pub grasp: GraspChoice,
    /// Switch to the next grasp of the same object at this tick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_tick: Option<u64>,
}

fn default_alphas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.99]
}
fn default_repetitions() -> u32 {
    1
}
fn default_max_ticks() -> u64 {
    DEFAULT_MAX_TICKS
}
fn default_max_failures() -> u32 {
    DEFAULT_MAX_FAILURES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Built-in scenario name or path to a scenario file.
    pub scenario: String,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub hmm: HmmParams,
    /// Everything but `alpha`, which comes from `alphas`.
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub world: WorldConfig,
    pub operators: Vec<OperatorProfile>,
    /// Rounds per alpha × operator cell.
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default = "default_max_failures")]
    pub max_failures_per_object: u32,
    /// Goal ids making up a round; all goals when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<String>>,
}

// Substream keys pack (cell, repetition, object, attempt) into 64 bits.
const MAX_REPETITIONS: u32 = 1 << 16;
const MAX_OBJECTS: usize = 1 << 8;
const MAX_ATTEMPTS: u32 = 1 << 4;

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| config_err(format!("experiment: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads the scenario, resolving relative paths against `base`.
    pub fn load_scenario(&self, base: Option<&Path>) -> Result<Scenario, HarnessError> {
        Scenario::resolve(&self.scenario, base).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<(), HarnessError> {
        if self.repetitions == 0 || self.repetitions > MAX_REPETITIONS {
            return Err(config_err(format!(
                "repetitions must be in 1..={MAX_REPETITIONS}"
            )));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(config_err(
                "alphas must be a nonempty list of values in [0, 1]",
            ));
        }
        if self.operators.is_empty() {
            return Err(config_err("at least one operator profile is required"));
        }
        for (i, p) in self.operators.iter().enumerate() {
            if self.operators[..i].iter().any(|q| q.name == p.name) {
                return Err(config_err(format!(
                    "duplicate operator profile `{}`",
                    p.name
                )));
            }
            if !(0.0..=1.0).contains(&p.p_idle_when_helped) || !(p.beta_op >= 0.0) {
                return Err(config_err(format!(
                    "operator profile `{}` out of range",
                    p.name
                )));
            }
        }
        if self.max_failures_per_object == 0 || self.max_failures_per_object > MAX_ATTEMPTS {
            return Err(config_err(format!(
                "max_failures_per_object must be in 1..={MAX_ATTEMPTS}"
            )));
        }
        if self.max_ticks == 0 {
            return Err(config_err("max_ticks must be positive"));
        }
        if !(ControllerConfig {
            alpha: 0.0,
            ..self.controller
        })
        .is_valid()
        {
            return Err(config_err("controller settings out of range"));
        }
        self.hmm.validate().map_err(|e| config_err(e.to_string()))?;
        let objects = self.object_indices(scenario)?;
        if objects.is_empty() || objects.len() > MAX_OBJECTS {
            return Err(config_err(format!(
                "a round needs 1..={MAX_OBJECTS} objects"
            )));
        }
        Ok(())
    }

    fn object_indices(&self, scenario: &Scenario) -> Result<Vec<usize>, HarnessError> {
        match &self.objects {
            None => Ok((0..scenario.num_goals()).collect()),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    scenario
                        .goal_index(id)
                        .ok_or_else(|| config_err(format!("unknown object `{id}`")))
                })
                .collect(),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.alphas.len() * self.operators.len()
    }
}

/// Seeds for one episode, drawn from its own substream of the experiment seed.
fn episode_draws(seed: u64, cell: usize, rep: u32, object: usize, attempt: u32) -> (u64, u64) {
    let key = (((cell as u64 * MAX_REPETITIONS as u64 + rep as u64) * MAX_OBJECTS as u64
        + object as u64)
        * MAX_ATTEMPTS as u64)
        + attempt as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    (rng.random(), rng.random())
}

fn operator_for(
    scenario: &Scenario,
    profile: &OperatorProfile,
    seed: u64,
    cell: usize,
    rep: u32,
    goal: usize,
    slot: usize,
    attempt: u32,
) -> OperatorConfig {
    let (pick, op_seed) = episode_draws(seed, cell, rep, slot, attempt);
    let class = scenario.class(goal);
    let k = class.len();
    let offset = match profile.grasp {
        GraspChoice::Random => (pick % k as u64) as usize,
        GraspChoice::First => 0,
    };
    let intended = class.start + offset;
    let switched = class.start + (offset + 1) % k;
    let switch = profile.switch_tick.filter(|_| k > 1);
    OperatorConfig {
        intended_grasp_id: scenario.grasp(intended).id.clone(),
        beta_op: profile.beta_op,
        p_idle_when_helped: profile.p_idle_when_helped,
        goal_switch_tick: switch,
        switched_grasp_id: switch.map(|_| scenario.grasp(switched).id.clone()),
        seed: op_seed,
    }
}

/// All episode logs of an experiment, in (alpha, operator, repetition,
/// object, attempt) order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub logs: Vec<EpisodeLog>,
    pub summary: Summary,
}

/// Runs every round of the experiment on `jobs` threads (0 = all cores).
/// The result does not depend on `jobs`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    jobs: usize,
) -> Result<BatchResult, HarnessError> {
    cfg.validate(scenario)?;
    let scenario = Arc::new(scenario.clone());
    let objects = cfg.object_indices(&scenario)?;
    let rounds: Vec<(usize, u32)> = (0..cfg.num_cells())
        .flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r)))
        .collect();

    let run = |&(cell, rep): &(usize, u32)| -> Result<Vec<EpisodeLog>, HarnessError> {
        let alpha = cfg.alphas[cell / cfg.operators.len()];
        let profile = &cfg.operators[cell % cfg.operators.len()];
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
        run_round(
            &scenario,
            &episode,
            &objects,
            cfg.max_failures_per_object,
            &profile.name,
            |goal, attempt| {
                let slot = objects
                    .iter()
                    .position(|&g| g == goal)
                    .expect("object in round");
                operator_for(&scenario, profile, cfg.seed, cell, rep, goal, slot, attempt)
            },
        )
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    let per_round: Vec<Result<Vec<EpisodeLog>, HarnessError>> =
        pool.install(|| rounds.par_iter().map(run).collect());
    let mut logs = Vec::new();
    for r in per_round {
        logs.extend(r?);
    }
    let summary = summarize(&logs)?;
    Ok(BatchResult { logs, summary })
}

pub fn log_file_name(index: usize) -> String {
    format!("ep_{index:06}.jsonl")
}

impl BatchResult {
    /// Writes `logs/ep_NNNNNN.jsonl`, `summary.csv` and `summary.json` under `out`.
    pub fn write(&self, out: &Path) -> Result<(), HarnessError> {
        let dir = out.join("logs");
        fs::create_dir_all(&dir)?;
        for (i, log) in self.logs.iter().enumerate() {
            fs::write(dir.join(log_file_name(i)), log.to_jsonl())?;
        }
        fs::write(out.join("summary.csv"), self.summary.to_csv()?)?;
        fs::write(out.join("summary.json"), self.summary.to_json())?;
        Ok(())
    }
}

/// Episode log files under `dir` (or `dir/logs`), sorted by name.
pub fn log_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let nested = dir.join("logs");
    let dir = if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    files.sort();
    Ok(files)
}

pub fn load_logs(dir: &Path) -> Result<Vec<EpisodeLog>, HarnessError> {
    log_files(dir)?
        .iter()
        .map(|p| {
            let f = fs::File::open(p)?;
            EpisodeLog::read_jsonl(std::io::BufReader::new(f))
                .map_err(|e| HarnessError::MalformedLog(format!("{}: {e}", p.display())))
        })
        .collect()
}

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::episode::{run_with_source, ScriptedInput};
use super::pipeline::{TickInput, TickRecord};
use super::HarnessError;
use crate::arbitration::ControllerConfig;
use crate::inference::HmmParams;
use crate::operator::OperatorConfig;
use crate::workspace::{Scenario, WorldConfig};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Everything needed to re-run an episode from its recorded inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub scenario_id: String,
    pub scenario: Scenario,
    pub controller: ControllerConfig,
    pub hmm: HmmParams,
    pub world: WorldConfig,
    pub max_ticks: u64,
    /// Simulated operator driving the episode; absent for live sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorConfig>,
    /// Name of the operator profile, used to group summaries.
    #[serde(default)]
    pub operator_profile: String,
    /// Goal the episode asks the operator to grasp.
    pub object: String,
    #[serde(default)]
    pub attempt: u32,
    pub seed: u64,
    pub rng: String,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Success { grasp_id: String, ticks: u64 },
    Timeout { ticks: u64 },
    Skipped,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub records: Vec<TickRecord>,
    pub outcome: Outcome,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LogLine {
    Header(Box<EpisodeHeader>),
    Tick(Box<TickRecord>),
    Outcome(Outcome),
}

impl EpisodeLog {
    /// The operator input stream that drove this episode.
    pub fn inputs(&self) -> Vec<TickInput> {
        self.records
            .iter()
            .map(|r| TickInput {
                mode: r.mode,
                u_h_raw: r.u_h_raw,
                target_goal: r.target_goal,
                alpha: Some(r.alpha),
            })
            .collect()
    }

    /// One JSON object per line: header, ticks, outcome.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut w, &LogLine::Header(Box::new(self.header.clone())))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &LogLine::Tick(Box::new(r.clone())))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &LogLine::Outcome(self.outcome.clone()))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, HarnessError> {
        let mut header = None;
        let mut records = Vec::new();
        let mut outcome = None;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| HarnessError::MalformedLog(format!("line {}: {e}", n + 1)))?;
            match parsed {
                LogLine::Header(h) if header.is_none() => header = Some(*h),
                LogLine::Tick(t) if header.is_some() && outcome.is_none() => records.push(*t),
                LogLine::Outcome(o) if header.is_some() && outcome.is_none() => outcome = Some(o),
                _ => {
                    return Err(HarnessError::MalformedLog(format!(
                        "line {}: out of order",
                        n + 1
                    )))
                }
            }
        }
        let log = EpisodeLog {
            header: header.ok_or_else(|| HarnessError::MalformedLog("missing header".into()))?,
            records,
            outcome: outcome.ok_or_else(|| HarnessError::MalformedLog("missing outcome".into()))?,
        };
        log.check_ticks()?;
        Ok(log)
    }

    fn check_ticks(&self) -> Result<(), HarnessError> {
        if self.records.windows(2).all(|w| w[0].tick < w[1].tick) {
            Ok(())
        } else {
            Err(HarnessError::MalformedLog(
                "ticks not strictly increasing".into(),
            ))
        }
    }

    /// Re-runs the recorded inputs through a fresh loop built from the header.
    pub fn replay(&self) -> Result<EpisodeLog, HarnessError> {
        if matches!(self.outcome, Outcome::Skipped) {
            return Ok(self.clone());
        }
        let mut source = ScriptedInput::new(self.inputs());
        run_with_source(
            Arc::new(self.header.scenario.clone()),
            self.header.clone(),
            &mut source,
        )
    }

    /// Replays and reports the first divergence, if any.
    pub fn verify_replay(&self) -> Result<(), HarnessError> {
        let again = self.replay()?;
        if again.records.len() != self.records.len() {
            return Err(HarnessError::ReplayMismatch(format!(
                "{} ticks recorded, {} replayed",
                self.records.len(),
                again.records.len()
            )));
        }
        if let Some((a, _)) = self
            .records
            .iter()
            .zip(&again.records)
            .find(|(a, b)| a != b)
        {
            return Err(HarnessError::ReplayMismatch(format!(
                "tick {} differs",
                a.tick
            )));
        }
        if again.outcome != self.outcome {
            return Err(HarnessError::ReplayMismatch("outcome differs".into()));
        }
        Ok(())
    }
}

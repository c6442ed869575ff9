use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{EpisodeLog, Outcome};
use super::HarnessError;

/// Ticks on which the operator issued no (snapped) command.
pub fn idle_ticks(log: &EpisodeLog) -> u64 {
    log.records.iter().filter(|r| r.is_idle()).count() as u64
}

fn successful(log: &EpisodeLog) -> Result<u64, HarnessError> {
    match log.outcome {
        Outcome::Success { .. } if !log.records.is_empty() => Ok(log.records.len() as u64),
        _ => Err(HarnessError::NotSuccessful),
    }
}

/// Number of ticks with operator input on a successful episode.
pub fn completion_effort(log: &EpisodeLog) -> Result<u64, HarnessError> {
    let ticks = successful(log)?;
    Ok(ticks - idle_ticks(log))
}

/// Percentage of a successful episode's ticks on which the operator idled.
pub fn acceptance(log: &EpisodeLog) -> Result<f64, HarnessError> {
    let ticks = successful(log)?;
    Ok(100.0 * idle_ticks(log) as f64 / ticks as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

/// Summary of one alpha × operator cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub operator: String,
    /// Episodes that ran (successes and timeouts).
    pub episodes: usize,
    pub successes: usize,
    pub timeouts: usize,
    pub skipped: usize,
    pub success_rate: f64,
    pub effort: Option<Stats>,
    pub acceptance: Option<Stats>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    alpha: f64,
    operator: &'a str,
    episodes: usize,
    successes: usize,
    timeouts: usize,
    skipped: usize,
    success_rate: f64,
    effort_mean: Option<f64>,
    effort_std: Option<f64>,
    effort_n: usize,
    acceptance_mean: Option<f64>,
    acceptance_std: Option<f64>,
    acceptance_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
}

impl Summary {
    pub fn cell(&self, alpha: f64, operator: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.operator == operator)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(CsvRow {
                alpha: c.alpha,
                operator: &c.operator,
                episodes: c.episodes,
                successes: c.successes,
                timeouts: c.timeouts,
                skipped: c.skipped,
                success_rate: c.success_rate,
                effort_mean: c.effort.map(|s| s.mean),
                effort_std: c.effort.map(|s| s.std),
                effort_n: c.effort.map_or(0, |s| s.n),
                acceptance_mean: c.acceptance.map(|s| s.mean),
                acceptance_std: c.acceptance.map(|s| s.std),
                acceptance_n: c.acceptance.map_or(0, |s| s.n),
            })?;
        }
        w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("summary serializes");
        v.push(b'\n');
        v
    }
}

fn cell_order(a: &(f64, String), b: &(f64, String)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

/// Per-cell metrics, cells ordered by alpha then operator name.
pub fn summarize(logs: &[EpisodeLog]) -> Result<Summary, HarnessError> {
    if logs.is_empty() {
        return Err(HarnessError::EmptyBatch);
    }
    let mut keys: Vec<(f64, String)> = logs
        .iter()
        .map(|l| (l.header.controller.alpha, l.header.operator_profile.clone()))
        .collect();
    keys.sort_by(cell_order);
    keys.dedup();

    let cells = keys
        .into_iter()
        .map(|(alpha, operator)| {
            let in_cell: Vec<_> = logs
                .iter()
                .filter(|l| {
                    l.header.controller.alpha == alpha && l.header.operator_profile == operator
                })
                .collect();
            let count = |f: fn(&Outcome) -> bool| in_cell.iter().filter(|l| f(&l.outcome)).count();
            let successes = count(|o| matches!(o, Outcome::Success { .. }));
            let timeouts = count(|o| matches!(o, Outcome::Timeout { .. }));
            let skipped = count(|o| matches!(o, Outcome::Skipped));
            let effort: Vec<f64> = in_cell
                .iter()
                .filter_map(|l| completion_effort(l).ok())
                .map(|e| e as f64)
                .collect();
            let accept: Vec<f64> = in_cell.iter().filter_map(|l| acceptance(l).ok()).collect();
            let episodes = successes + timeouts;
            CellSummary {
                alpha,
                operator,
                episodes,
                successes,
                timeouts,
                skipped,
                success_rate: if episodes > 0 {
                    successes as f64 / episodes as f64
                } else {
                    0.0
                },
                effort: Stats::of(&effort),
                acceptance: Stats::of(&accept),
            }
        })
        .collect();
    Ok(Summary { cells })
}

/// Percentile bootstrap confidence interval for the mean.
pub fn bootstrap_mean_ci(
    values: &[f64],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Option<(f64, f64)> {
    if values.is_empty() || resamples == 0 || !(0.0..1.0).contains(&confidence) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Some((at(tail), at(1.0 - tail)))
}

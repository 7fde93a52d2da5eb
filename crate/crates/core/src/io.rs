//! File formats: problem, run-config, generator and oracle JSON; trajectory
//! and ensemble CSV. Writes go through a temporary file and a rename.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::EnsembleStats;
use crate::dynamics::{IterationMode, NoiseModel, RunConfig, StepSchedule, Trajectory};
use crate::error::{EcimError, Result};
use crate::problem::CouplingProblem;

/// On-disk problem: `{"n", "J" (row-major), "h", "label"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    #[serde(rename = "J")]
    pub j: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub label: Option<String>,
}

impl From<&CouplingProblem> for ProblemFile {
    fn from(p: &CouplingProblem) -> Self {
        Self {
            n: p.n(),
            j: p.coupling_rows(),
            h: p.field().to_vec(),
            label: p.label().map(str::to_string),
        }
    }
}

impl TryFrom<ProblemFile> for CouplingProblem {
    type Error = EcimError;

    fn try_from(f: ProblemFile) -> Result<Self> {
        if f.j.len() != f.n {
            return Err(EcimError::DimensionMismatch {
                what: "J (row count vs n)",
                expected: f.n,
                found: f.j.len(),
            });
        }
        CouplingProblem::from_rows(&f.j, f.h, f.label)
    }
}

pub fn problem_to_json(p: &CouplingProblem) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ProblemFile::from(p))?)
}

pub fn problem_from_json(text: &str) -> Result<CouplingProblem> {
    serde_json::from_str::<ProblemFile>(text)?.try_into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

/// On-disk run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct RunConfigFile {
    pub mode: String,
    #[serde(default = "one")]
    pub alpha: f64,
    pub schedule: ScheduleFile,
    pub sigma2: f64,
    pub K: usize,
    pub seed: u64,
    #[serde(default)]
    pub record_states: bool,
}

fn one() -> f64 {
    1.0
}

fn missing(field: &str) -> EcimError {
    EcimError::Malformed(format!("missing field `{field}`"))
}

impl TryFrom<RunConfigFile> for RunConfig {
    type Error = EcimError;

    fn try_from(f: RunConfigFile) -> Result<Self> {
        if !f.alpha.is_finite() {
            return Err(EcimError::Malformed(format!("field `alpha` is {}", f.alpha)));
        }
        let mode = match f.mode.as_str() {
            "transfer_original" => IterationMode::TransferOriginal { alpha: f.alpha },
            "transfer_extended" => IterationMode::TransferExtended { alpha: f.alpha },
            "linearized" => IterationMode::Linearized,
            "transfer_noise_scaled" => IterationMode::TransferNoiseScaled { alpha: f.alpha },
            "linearized_noise_scaled" => IterationMode::LinearizedNoiseScaled,
            other => {
                return Err(EcimError::Malformed(format!(
                    "field `mode` has unknown value `{other}`"
                )))
            }
        };
        let schedule = match f.schedule.kind.as_str() {
            "constant" => StepSchedule::constant(f.schedule.beta.ok_or_else(|| missing("schedule.beta"))?)?,
            "poly" => StepSchedule::poly_decay(
                f.schedule.beta0.ok_or_else(|| missing("schedule.beta0"))?,
                f.schedule.r.ok_or_else(|| missing("schedule.r"))?,
            )?,
            other => {
                return Err(EcimError::Malformed(format!(
                    "field `schedule.kind` has unknown value `{other}`"
                )))
            }
        };
        Ok(RunConfig {
            mode,
            schedule,
            noise: NoiseModel::new(f.sigma2, f.seed)?,
            iterations: f.K,
            record_states: f.record_states,
        })
    }
}

impl From<&RunConfig> for RunConfigFile {
    fn from(c: &RunConfig) -> Self {
        let schedule = match c.schedule {
            StepSchedule::Constant { beta } => ScheduleFile {
                kind: "constant".into(),
                beta: Some(beta),
                beta0: None,
                r: None,
            },
            StepSchedule::PolyDecay { beta0, r } => ScheduleFile {
                kind: "poly".into(),
                beta: None,
                beta0: Some(beta0),
                r: Some(r),
            },
        };
        Self {
            mode: c.mode.name().into(),
            alpha: c.mode.alpha(),
            schedule,
            sigma2: c.noise.sigma_squared,
            K: c.iterations,
            seed: c.noise.seed,
            record_states: c.record_states,
        }
    }
}

pub fn run_config_from_json(text: &str) -> Result<RunConfig> {
    serde_json::from_str::<RunConfigFile>(text)?.try_into()
}

pub fn run_config_to_json(c: &RunConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(&RunConfigFile::from(c))?)
}

/// Oracle summary written by the `oracle` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub e_star: f64,
    pub s_star: Vec<f64>,
    pub method: String,
    pub certified: bool,
    pub mu_hat: Option<f64>,
    #[serde(default)]
    pub definiteness: Option<String>,
    #[serde(default)]
    pub noise_required: Option<bool>,
}

/// `k,energy` rows.
pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut out = String::from("k,energy\n");
    for (k, e) in t.energies.iter().enumerate() {
        let _ = writeln!(out, "{k},{e}");
    }
    out
}

/// `k,mean_gap,ci_halfwidth` rows.
pub fn ensemble_csv(stats: &EnsembleStats) -> String {
    let mut out = String::from("k,mean_gap,ci_halfwidth\n");
    for (k, (m, c)) in stats.mean_gap.iter().zip(&stats.ci_halfwidth).enumerate() {
        let _ = writeln!(out, "{k},{m},{c}");
    }
    out
}

pub fn ensemble_from_csv(text: &str) -> Result<EnsembleStats> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["k", "mean_gap", "ci_halfwidth"] {
        return Err(EcimError::Malformed(format!(
            "ensemble CSV header must be `k,mean_gap,ci_halfwidth`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut mean_gap = Vec::new();
    let mut ci_halfwidth = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize, name: &str| -> Result<f64> {
            record
                .get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| EcimError::Malformed(format!("row {row}: bad `{name}` value")))
        };
        let k = record
            .get(0)
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| EcimError::Malformed(format!("row {row}: bad `k` value")))?;
        if k != row {
            return Err(EcimError::Malformed(format!(
                "row {row}: `k` = {k}, expected consecutive iterations from 0"
            )));
        }
        mean_gap.push(field(1, "mean_gap")?);
        ci_halfwidth.push(field(2, "ci_halfwidth")?);
    }
    if mean_gap.is_empty() {
        return Err(EcimError::Malformed("ensemble CSV has no rows".into()));
    }
    Ok(EnsembleStats {
        runs: 0,
        iterations: mean_gap.len() - 1,
        mean_gap,
        ci_halfwidth,
        clamp_events: 0,
    })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| EcimError::Io(e.error))?;
    Ok(())
}

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::nispa::TaskLog;

/// Bumped whenever a field of the JSON report or a CSV column changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything recorded for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// `accuracy_matrix[i][j]`: test accuracy on task `j` right after
    /// learning task `i`, for `j <= i`.
    pub accuracy_matrix: Vec<Vec<f64>>,
    /// Test accuracy of every task after the last one.
    pub accuracy_end: Vec<f64>,
    pub mean_accuracy: f64,
    pub task_logs: Vec<TaskLog>,
    /// Stable units per hidden layer after each task.
    pub stable_counts: Vec<Vec<usize>>,
    /// Replay buffer balance after each task; empty without a buffer.
    pub buffer_balanced: Vec<bool>,
}

impl SeedRun {
    /// Drop in accuracy on task `j` between learning it and the end.
    pub fn forgetting(&self, j: usize) -> f64 {
        self.accuracy_matrix[j][j] - self.accuracy_end[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub method: Method,
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub failures: Vec<SeedFailure>,
    /// Final accuracy of each task across seeds.
    pub per_task: Vec<Summary>,
    /// Across seeds, of each seed's mean final accuracy.
    pub overall: Summary,
}

impl RunReport {
    pub fn new(config: ExperimentConfig, runs: Vec<SeedRun>, failures: Vec<SeedFailure>) -> Self {
        let tasks = runs.iter().map(|r| r.accuracy_end.len()).max().unwrap_or(0);
        let per_task = (0..tasks)
            .map(|j| {
                let values: Vec<f64> = runs.iter().filter_map(|r| r.accuracy_end.get(j).copied()).collect();
                Summary::of(&values)
            })
            .collect();
        let means: Vec<f64> = runs.iter().map(|r| r.mean_accuracy).collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: config.method,
            config,
            per_task,
            overall: Summary::of(&means),
            runs,
            failures,
        }
    }

    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "report schema version {} is not supported",
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// One row per seed and task, then per-task aggregates (`seed = all`)
    /// and one overall row (`task_id = all`).
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "seed", "task_id", "accuracy_end", "mean", "std"])?;
        let method = self.method.name();
        for run in &self.runs {
            for (j, acc) in run.accuracy_end.iter().enumerate() {
                w.write_record([method, &run.seed.to_string(), &j.to_string(), &acc.to_string(), "", ""])?;
            }
        }
        for (j, s) in self.per_task.iter().enumerate() {
            w.write_record([method, "all", &j.to_string(), "", &s.mean.to_string(), &s.std.to_string()])?;
        }
        w.write_record([
            method,
            "all",
            "all",
            "",
            &self.overall.mean.to_string(),
            &self.overall.std.to_string(),
        ])?;
        w.into_inner().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes `report.<ext>` into `dir` and returns its path.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("report.{}", format.extension()));
    let bytes = match format {
        ReportFormat::Json => report.to_json()?.into_bytes(),
        ReportFormat::Csv => report.to_csv()?,
    };
    write_atomic(&path, &bytes)?;
    Ok(path)
}

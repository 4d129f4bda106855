//! Browser bindings. Every export returns a JSON string; failures come back
//! as `{"error": "..."}` so the page never has to catch exceptions.

use nispa_lab::bench::{run_seed, train_and_measure_skewness, ExperimentConfig};
use nispa_lab::nispa::{tau_schedule, TauSchedule};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
pub struct TauRow {
    pub phase: usize,
    pub tau: f64,
    pub clamped: bool,
}

/// τ for phases `0 ..= k + 1`. `step > 0` selects the linear schedule.
pub fn tau_rows(k: usize, step: f64) -> Result<Vec<TauRow>, String> {
    if k == 0 {
        return Err("k must be positive".into());
    }
    let schedule = if step > 0.0 {
        TauSchedule::Linear { step }
    } else {
        TauSchedule::Cosine
    };
    Ok((0..=k + 1)
        .map(|p| {
            let t = tau_schedule(p, k, schedule);
            TauRow {
                phase: p,
                tau: t.value,
                clamped: t.clamped,
            }
        })
        .collect())
}

fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        n_seeds: 1,
        pool: 2,
        hidden: vec![32, 32],
        ..ExperimentConfig::desk()
    }
}

#[derive(Serialize)]
pub struct SkewnessOut {
    /// `g1[e][l]` after epoch `e + 1`.
    pub g1: Vec<Vec<f64>>,
    pub accuracy: f64,
}

pub fn skewness_rows(seed: u64, epochs: usize, density: f64) -> Result<SkewnessOut, String> {
    if epochs == 0 || epochs > 50 {
        return Err("epochs must lie in 1..=50".into());
    }
    let mut config = small_config(seed);
    config.density = density;
    config.validate().map_err(|e| e.to_string())?;
    let (_, _, report) = train_and_measure_skewness(&config, seed, epochs).map_err(|e| e.to_string())?;
    Ok(SkewnessOut {
        g1: report.per_epoch.iter().map(|l| l.iter().map(|s| s.g1).collect()).collect(),
        accuracy: report.final_accuracy,
    })
}

#[derive(Serialize)]
pub struct RunOut {
    pub accuracy_matrix: Vec<Vec<f64>>,
    pub stable_counts: Vec<Vec<usize>>,
    pub phases: Vec<usize>,
    pub mean_accuracy: f64,
}

/// Task-incremental digits, two classes per task.
pub fn nispa_rows(seed: u64, n_tasks: usize) -> Result<RunOut, String> {
    if !(1..=5).contains(&n_tasks) {
        return Err("n_tasks must lie in 1..=5".into());
    }
    let config = ExperimentConfig {
        n_tasks,
        k: 10,
        ..small_config(seed)
    };
    let run = run_seed(&config, seed).map_err(|e| e.to_string())?;
    Ok(RunOut {
        phases: run.task_logs.iter().map(|l| l.phases.len()).collect(),
        accuracy_matrix: run.accuracy_matrix,
        stable_counts: run.stable_counts,
        mean_accuracy: run.mean_accuracy,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    let value = match r {
        Ok(v) => serde_json::to_value(v).unwrap_or_else(|e| serde_json::json!({ "error": e.to_string() })),
        Err(e) => serde_json::json!({ "error": e }),
    };
    value.to_string()
}

#[wasm_bindgen]
pub fn tau_curve(k: usize, step: f64) -> String {
    to_json(tau_rows(k, step))
}

#[wasm_bindgen]
pub fn skewness(seed: u32, epochs: usize, density: f64) -> String {
    to_json(skewness_rows(seed as u64, epochs, density))
}

// u32 seeds keep the JS side on plain numbers instead of BigInt
#[wasm_bindgen]
pub fn small_nispa_run(seed: u32, n_tasks: usize) -> String {
    to_json(nispa_rows(seed as u64, n_tasks))
}

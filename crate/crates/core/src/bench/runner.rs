use rayon::prelude::*;

use super::config::{ExperimentConfig, Method, Scenario};
use super::report::{RunReport, SeedFailure, SeedRun};
use crate::data::TaskSequence;
use crate::engine::{HeadLayout, Network};
use crate::error::{Error, Result};
use crate::nispa::{run_task, train_until_plateau, LearnerState, NispaConfig, TaskLog, TaskOptions};
use crate::replay::{average_accuracy, run_class_incremental, run_er_baseline, ClassIncrementalReport, ReplayConfig};
use crate::{seeded_rng, Rng};

/// Runs every seed of `config` in parallel. A seed that errors is recorded
/// in `failures`; only an invalid configuration fails the whole call.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let outcomes: Vec<(u64, Result<SeedRun>)> = config
        .seeds()
        .into_par_iter()
        .map(|seed| (seed, run_seed(config, seed)))
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(RunReport::new(config.clone(), runs, failures))
}

/// One seed drives both the data split and the single run generator.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let sequence = config.build_sequence(seed)?;
    let nispa = config.nispa(seed);
    let mut rng = seeded_rng(seed);
    match config.resolved_scenario() {
        Scenario::Class => {
            let hidden = &config.hidden;
            let replay = config.replay();
            let none = ReplayConfig {
                per_class_capacity: 0,
                ..replay
            };
            let report = match config.method {
                Method::NispaReplay => run_class_incremental(&sequence, hidden, &nispa, &replay, &mut rng)?,
                Method::Nispa => run_class_incremental(&sequence, hidden, &nispa, &none, &mut rng)?,
                Method::Er => run_er_baseline(&sequence, hidden, &nispa, &replay, &mut rng)?,
                Method::Naive => run_er_baseline(&sequence, hidden, &nispa, &none, &mut rng)?,
                m => return Err(Error::Config(format!("{} needs the task scenario", m.name()))),
            };
            Ok(from_class_report(seed, report))
        }
        _ => {
            let (matrix, logs) = match config.method {
                Method::Nispa => task_nispa(&sequence, &config.hidden, &nispa, &mut rng)?,
                Method::Naive => task_naive(&sequence, &config.hidden, &nispa, &mut rng)?,
                Method::Stl => task_stl(&sequence, &config.hidden, &nispa, nispa.density, &mut rng)?,
                Method::StlIso => {
                    let d = nispa.density / sequence.len() as f64;
                    task_stl(&sequence, &config.hidden, &nispa, d, &mut rng)?
                }
                m => return Err(Error::Config(format!("{} needs the class scenario", m.name()))),
            };
            Ok(seed_run(seed, matrix, logs, Vec::new()))
        }
    }
}

fn seed_run(seed: u64, accuracy_matrix: Vec<Vec<f64>>, task_logs: Vec<TaskLog>, buffer_balanced: Vec<bool>) -> SeedRun {
    let accuracy_end = accuracy_matrix.last().cloned().unwrap_or_default();
    SeedRun {
        seed,
        mean_accuracy: average_accuracy(&accuracy_end),
        accuracy_end,
        accuracy_matrix,
        stable_counts: task_logs.iter().map(|l| l.stable_counts.clone()).collect(),
        task_logs,
        buffer_balanced,
    }
}

fn from_class_report(seed: u64, report: ClassIncrementalReport) -> SeedRun {
    let balanced = if report.buffer_sizes.iter().any(|&n| n > 0) {
        report.buffer_balanced
    } else {
        Vec::new()
    };
    seed_run(seed, report.accuracy_matrix, report.task_logs, balanced)
}

/// One head per task, covering the task's class ids.
pub fn task_heads(sequence: &TaskSequence) -> HeadLayout {
    HeadLayout::new(
        sequence
            .tasks
            .iter()
            .map(|t| {
                let lo = t.classes.iter().copied().min().unwrap_or(0);
                let hi = t.classes.iter().copied().max().map_or(0, |c| c + 1);
                lo..hi
            })
            .collect(),
    )
}

/// Multi-head network sized for the sequence.
pub fn task_network(sequence: &TaskSequence, hidden: &[usize], density: f64, rng: &mut Rng) -> Result<Network> {
    let heads = task_heads(sequence);
    let mut sizes = vec![sequence.input_width()];
    sizes.extend_from_slice(hidden);
    sizes.push(heads.outputs());
    Network::init(&sizes, density, heads, rng)
}

fn seen(nets: &[&Network], sequence: &TaskSequence, upto: usize) -> Result<Vec<f64>> {
    (0..=upto)
        .map(|j| nets[j.min(nets.len() - 1)].evaluate(&sequence.tasks[j].test, j))
        .collect()
}

/// NISPA with task identity at test time. Returns the accuracy matrix and
/// the per-task logs.
pub fn task_nispa(
    sequence: &TaskSequence,
    hidden: &[usize],
    config: &NispaConfig,
    rng: &mut Rng,
) -> Result<(Vec<Vec<f64>>, Vec<TaskLog>)> {
    let net = task_network(sequence, hidden, config.density, rng)?;
    let mut state = LearnerState::new(net, config);
    let mut matrix = Vec::new();
    let mut logs = Vec::new();
    for (t, task) in sequence.tasks.iter().enumerate() {
        logs.push(run_task(&mut state, task, t, config, TaskOptions::task_incremental(t, config), rng)?);
        matrix.push(seen(&[&state.net], sequence, t)?);
    }
    Ok((matrix, logs))
}

/// Sequential fine-tuning of one sparse multi-head network.
pub fn task_naive(
    sequence: &TaskSequence,
    hidden: &[usize],
    config: &NispaConfig,
    rng: &mut Rng,
) -> Result<(Vec<Vec<f64>>, Vec<TaskLog>)> {
    let mut net = task_network(sequence, hidden, config.density, rng)?;
    let mut matrix = Vec::new();
    let mut logs = Vec::new();
    for (t, task) in sequence.tasks.iter().enumerate() {
        // fresh moments per task, as for NISPA
        let mut opt = config.new_optimizer();
        logs.push(train_until_plateau(&mut net, &mut opt, task, t, config, t, None, rng)?);
        matrix.push(seen(&[&net], sequence, t)?);
    }
    Ok((matrix, logs))
}

/// An independent network per task at `density`.
pub fn task_stl(
    sequence: &TaskSequence,
    hidden: &[usize],
    config: &NispaConfig,
    density: f64,
    rng: &mut Rng,
) -> Result<(Vec<Vec<f64>>, Vec<TaskLog>)> {
    let mut nets = Vec::new();
    let mut matrix = Vec::new();
    let mut logs = Vec::new();
    for (t, task) in sequence.tasks.iter().enumerate() {
        let mut net = task_network(sequence, hidden, density, rng)?;
        let mut opt = config.new_optimizer();
        logs.push(train_until_plateau(&mut net, &mut opt, task, t, config, t, None, rng)?);
        nets.push(net);
        let refs: Vec<&Network> = nets.iter().collect();
        matrix.push(seen(&refs, sequence, t)?);
    }
    Ok((matrix, logs))
}

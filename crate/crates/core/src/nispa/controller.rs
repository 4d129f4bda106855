use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::partition::UnitPartition;
use super::select::{select_candidates, tau_schedule, TauSchedule};
use crate::data::Task;
use crate::engine::{
    kaiming, train_epochs_with, BatchSource, Network, OptimizerKind, OptimizerState, Snapshot,
    SnapshotStore, TrainParams,
};
use crate::error::{Error, Result};
use crate::rewire::{rewire_round, GrowthPolicy, RewireReport};
use crate::{Real, Rng};

/// Hyperparameters of the phase controller and the optimizer it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NispaConfig {
    /// Epochs per phase (`e`).
    pub epochs_per_phase: usize,
    /// Validation accuracy loss accepted between phases, in percentage
    /// points (`a_f`).
    pub accuracy_tolerance: f64,
    /// Shape parameter of the tau schedule.
    pub k: usize,
    /// Connection density of every layer.
    pub density: f64,
    pub tau_schedule: TauSchedule,
    /// Resample all unfrozen weights after each task.
    pub reinit: bool,
    pub growth_policy: GrowthPolicy,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for NispaConfig {
    fn default() -> Self {
        Self {
            epochs_per_phase: 5,
            accuracy_tolerance: 0.75,
            k: 30,
            density: 0.2,
            tau_schedule: TauSchedule::Cosine,
            reinit: true,
            growth_policy: GrowthPolicy::Random,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            batch_size: 512,
        }
    }
}

impl NispaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs_per_phase < 1 {
            return bad("epochs_per_phase must be at least 1");
        }
        if !(self.accuracy_tolerance >= 0.0) {
            return bad("accuracy_tolerance must be non-negative");
        }
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidDensity(self.density));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if let TauSchedule::Linear { step } = self.tau_schedule {
            if !(step > 0.0) {
                return bad("linear tau step must be positive");
            }
        }
        Ok(())
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            epochs: self.epochs_per_phase,
            batch_size: self.batch_size,
        }
    }

    pub fn new_optimizer(&self) -> OptimizerState {
        OptimizerState::new(self.optimizer, self.learning_rate as Real)
    }
}

/// How a task is run beyond the configuration: the task-incremental
/// default, or the replay variant for class-incremental learning.
#[derive(Clone)]
pub struct TaskOptions<'a> {
    /// Output head used for training and validation.
    pub head: usize,
    /// Output units treated as stable targets during the task, so no
    /// plastic unit feeds them. `None` means the whole head.
    pub protected_outputs: Option<Range<usize>>,
    /// Freeze the protected output units at the end of the task.
    pub freeze_outputs: bool,
    /// Resample unfrozen weights at the end of the task.
    pub reinit: bool,
    /// Extra minibatches mixed into every step, with their loss weight.
    pub memory: Option<(&'a dyn BatchSource, Real)>,
}

impl<'a> TaskOptions<'a> {
    pub fn task_incremental(head: usize, config: &NispaConfig) -> Self {
        Self {
            head,
            protected_outputs: None,
            freeze_outputs: true,
            reinit: config.reinit,
            memory: None,
        }
    }
}

/// One phase of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub p: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub best_val_accuracy: f64,
    /// Tau used for selection; `None` when this phase ended the task.
    pub tau: Option<f64>,
    /// Units that became candidates this phase, per hidden layer.
    pub new_candidates: Vec<usize>,
    /// Stable plus candidate units after the phase, per hidden layer.
    pub protected_units: Vec<usize>,
    pub rewire: Option<RewireReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Validation accuracy fell more than the tolerance below the best.
    AccuracyDrop,
    /// Tau reached zero and no further selection is possible.
    ScheduleExhausted,
}

/// Everything that happened while learning one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub task_id: usize,
    pub phases: Vec<PhaseRecord>,
    pub stop_reason: StopReason,
    /// Phase whose end state the task finished with.
    pub kept_phase: usize,
    /// Validation accuracy of the kept state, in [0, 1].
    pub final_val_accuracy: f64,
    pub stable_counts: Vec<usize>,
    /// Units that became stable in this task, per hidden layer.
    pub new_stable: Vec<usize>,
    /// Rewiring done after the revert when no selection had been kept.
    pub closing_rewire: Option<RewireReport>,
    pub demotions: usize,
}

impl TaskLog {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }
}

/// Mutable learning state carried from task to task.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub net: Network,
    pub partition: UnitPartition,
    pub optimizer: OptimizerState,
}

impl LearnerState {
    pub fn new(net: Network, config: &NispaConfig) -> Self {
        Self {
            partition: UnitPartition::all_plastic(&net),
            optimizer: config.new_optimizer(),
            net,
        }
    }
}

/// Learns one task with phased training, candidate selection and rewiring,
/// then promotes candidates and freezes stable units.
///
/// Each phase trains `e` epochs and validates. While the best accuracy so
/// far minus the tolerance does not exceed the current accuracy, tau is
/// taken from the schedule, candidates are selected from the training-set
/// activations and the network is rewired. Otherwise the model is reverted
/// to the end of the previous phase and the stable sets to those matching
/// that model.
pub fn run_task(
    state: &mut LearnerState,
    task: &Task,
    task_id: usize,
    config: &NispaConfig,
    options: TaskOptions<'_>,
    rng: &mut Rng,
) -> Result<TaskLog> {
    config.validate()?;
    state.partition.check_matches(&state.net)?;
    // outputs count as stable targets for the whole task
    let protected = match options.protected_outputs.clone() {
        Some(r) => r,
        None => state.net.heads().range(options.head)?,
    };
    if protected.end > state.net.output_width() {
        return Err(Error::DimensionMismatch {
            expected: state.net.output_width(),
            got: protected.end,
        });
    }
    state.partition.mark_outputs_stable(protected);
    state.optimizer.reset();
    let stable_before = state.partition.stable_counts();

    let mut models = SnapshotStore::new();
    let mut stable_sets: BTreeMap<usize, UnitPartition> = BTreeMap::new();
    stable_sets.insert(0, state.partition.clone());

    let mut phases = Vec::new();
    let mut best = 0.0f64;
    let mut last_tau = 1.0f64;
    let mut demotions = 0;
    let mut p = 1usize;
    let (stop_reason, kept_phase, closing_rewire) = loop {
        train_epochs_with(
            &mut state.net,
            &mut state.optimizer,
            &task.train,
            options.head,
            config.train_params(),
            options.memory,
            rng,
        )?;
        models.store(p, Snapshot::capture(&state.net, &state.partition, &state.optimizer));
        let val = state.net.evaluate(&task.val, options.head)?;
        let train = state.net.evaluate(&task.train, options.head)?;
        best = best.max(val);
        let record = |tau, new_candidates, protected_units, rewire| PhaseRecord {
            p,
            train_accuracy: train,
            val_accuracy: val,
            best_val_accuracy: best,
            tau,
            new_candidates,
            protected_units,
            rewire,
        };

        let keeps_accuracy = 100.0 * best - config.accuracy_tolerance <= 100.0 * val;
        let exhausted = p > 1 && last_tau <= 0.0;
        if keeps_accuracy && !exhausted {
            let tau = tau_schedule(p, config.k, config.tau_schedule).value;
            last_tau = tau;
            let trace = state.net.accumulate_activations(&task.train)?;
            let chosen = select_candidates(&trace, &mut state.partition, tau)?;
            let mut report = rewire_round(&mut state.net, &mut state.partition, config.growth_policy, rng);
            reset_touched(&mut state.optimizer, &mut report);
            demotions += report.demoted_units.len();
            stable_sets.insert(p, state.partition.clone());
            phases.push(record(
                Some(tau),
                chosen.iter().map(Vec::len).collect(),
                state.partition.protected_counts(),
                Some(report),
            ));
            p += 1;
            continue;
        }

        phases.push(record(None, vec![0; state.partition.num_hidden()], state.partition.protected_counts(), None));
        if keeps_accuracy {
            // Schedule exhausted: the current model already matches the
            // latest stable sets.
            break (StopReason::ScheduleExhausted, p, None);
        }
        let restored = models.restore(p - 1)?;
        state.net = restored.net;
        state.optimizer = restored.optimizer;
        state.partition = stable_sets
            .get(&(p - 2))
            .cloned()
            .ok_or(Error::MissingSnapshot(p - 2))?;
        // Reverting to the first phase keeps the inherited stable sets, but
        // the task's output units may still read from plastic units.
        let closing = if state.partition.find_isolation_violation(&state.net).is_some() {
            let mut report = rewire_round(&mut state.net, &mut state.partition, config.growth_policy, rng);
            reset_touched(&mut state.optimizer, &mut report);
            demotions += report.demoted_units.len();
            Some(report)
        } else {
            None
        };
        break (StopReason::AccuracyDrop, p - 1, closing);
    };

    let final_val_accuracy = state.net.evaluate(&task.val, options.head)?;
    promote_and_freeze(&mut state.net, &mut state.partition, options.freeze_outputs)?;
    if options.reinit {
        reinit_plastic(&mut state.net, &mut state.optimizer, rng);
    }
    let stable_counts = state.partition.stable_counts();
    Ok(TaskLog {
        task_id,
        phases,
        stop_reason,
        kept_phase,
        final_val_accuracy,
        new_stable: stable_counts
            .iter()
            .zip(&stable_before)
            .map(|(a, b)| a.saturating_sub(*b))
            .collect(),
        stable_counts,
        closing_rewire,
        demotions,
    })
}

fn reset_touched(optimizer: &mut OptimizerState, report: &mut RewireReport) {
    for (l, positions) in std::mem::take(&mut report.touched).iter().enumerate() {
        optimizer.reset_positions(l, positions);
    }
}

/// Promotes all candidates to stable and freezes every existing incoming
/// connection and the bias of each stable unit. With `freeze_outputs`, the
/// output units marked stable are frozen the same way.
///
/// Fails if any plastic unit still feeds a stable or candidate unit.
pub fn promote_and_freeze(
    net: &mut Network,
    partition: &mut UnitPartition,
    freeze_outputs: bool,
) -> Result<()> {
    partition.check_isolation(net)?;
    partition.promote_candidates();
    for h in 0..partition.num_hidden() {
        for unit in partition.stable(h) {
            net.layer_mut(h).freeze_unit(unit);
        }
    }
    if freeze_outputs {
        let out = partition.num_hidden();
        let stable: Vec<usize> = partition
            .stable_outputs()
            .iter()
            .enumerate()
            .filter_map(|(u, &s)| s.then_some(u))
            .collect();
        for u in stable {
            net.layer_mut(out).freeze_unit(u);
        }
    }
    Ok(())
}

/// Resamples every existing unfrozen weight from the initialization
/// distribution and zeroes unfrozen biases. Frozen parameters are left
/// untouched and the optimizer state is cleared.
pub fn reinit_plastic(net: &mut Network, optimizer: &mut OptimizerState, rng: &mut Rng) {
    use rand_distr::Distribution;
    for l in 0..net.layers().len() {
        let layer = net.layer_mut(l);
        let normal = kaiming(layer.in_units());
        for i in 0..layer.out_units() {
            for j in 0..layer.in_units() {
                if layer.is_trainable(i, j) {
                    layer.weights[(i, j)] = normal.sample(rng);
                }
            }
            if !layer.bias_frozen[i] {
                layer.bias[i] = 0.0;
            }
        }
    }
    optimizer.reset();
}

/// Trains in phases of `e` epochs with the same stopping rule as
/// [`run_task`] but no selection, rewiring or freezing. Used by the
/// baselines. Stops after at most `k + 1` phases.
pub fn train_until_plateau(
    net: &mut Network,
    optimizer: &mut OptimizerState,
    task: &Task,
    task_id: usize,
    config: &NispaConfig,
    head: usize,
    memory: Option<(&dyn BatchSource, Real)>,
    rng: &mut Rng,
) -> Result<TaskLog> {
    config.validate()?;
    optimizer.reset();
    let hidden = net.num_hidden();
    let mut previous: Option<(Network, OptimizerState)> = None;
    let mut phases = Vec::new();
    let mut best = 0.0f64;
    let mut p = 1;
    let (stop_reason, kept_phase) = loop {
        train_epochs_with(net, optimizer, &task.train, head, config.train_params(), memory, rng)?;
        let val = net.evaluate(&task.val, head)?;
        let train = net.evaluate(&task.train, head)?;
        best = best.max(val);
        phases.push(PhaseRecord {
            p,
            train_accuracy: train,
            val_accuracy: val,
            best_val_accuracy: best,
            tau: None,
            new_candidates: vec![0; hidden],
            protected_units: vec![0; hidden],
            rewire: None,
        });
        if 100.0 * best - config.accuracy_tolerance > 100.0 * val {
            let (n, o) = previous.take().ok_or(Error::MissingSnapshot(p - 1))?;
            *net = n;
            *optimizer = o;
            break (StopReason::AccuracyDrop, p - 1);
        }
        if p > config.k {
            break (StopReason::ScheduleExhausted, p);
        }
        previous = Some((net.clone(), optimizer.clone()));
        p += 1;
    };
    Ok(TaskLog {
        task_id,
        phases,
        stop_reason,
        kept_phase,
        final_val_accuracy: net.evaluate(&task.val, head)?,
        stable_counts: vec![0; hidden],
        new_stable: vec![0; hidden],
        closing_rewire: None,
        demotions: 0,
    })
}

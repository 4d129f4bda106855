//! Class-incremental learning with a class-balanced buffer of raw samples.
//!
//! Every training step adds `lambda` times the cross-entropy of a buffer
//! minibatch to the task loss. NISPA runs with all outputs in one shared
//! head. Only the current task's class outputs are protected from plastic
//! inputs; the output layer is never frozen and re-initialization is
//! skipped.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskSequence};
use crate::engine::{cross_entropy, BatchSource, HeadLayout, Network};
use crate::error::{Error, Result};
use crate::nispa::{run_task, train_until_plateau, LearnerState, NispaConfig, TaskLog, TaskOptions};
use crate::{Real, Rng};

/// Version written into saved buffers.
pub const BUFFER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    /// Weight of the buffer loss.
    pub lambda: f64,
    pub per_class_capacity: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            per_class_capacity: 10,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSample {
    pub features: Vec<Real>,
    pub label: usize,
}

/// Up to `per_class_capacity` stored samples for every class seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    per_class_capacity: usize,
    store: BTreeMap<usize, Vec<StoredSample>>,
}

#[derive(Serialize, Deserialize)]
struct SavedBuffer {
    version: u32,
    buffer: ReplayBuffer,
}

impl ReplayBuffer {
    pub fn new(per_class_capacity: usize) -> Self {
        Self {
            per_class_capacity,
            store: BTreeMap::new(),
        }
    }

    pub fn per_class_capacity(&self) -> usize {
        self.per_class_capacity
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.store.keys().copied()
    }

    pub fn class_len(&self, class: usize) -> usize {
        self.store.get(&class).map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.store.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores a uniform sample of `per_class_capacity` examples (or all of
    /// them) for every class of `data`. Fails without changes if any class
    /// is already present.
    pub fn update(&mut self, data: &Dataset, rng: &mut Rng) -> Result<()> {
        let by_class = data.indices_by_class();
        if let Some((class, _)) = by_class.iter().find(|(c, _)| self.store.contains_key(c)) {
            return Err(Error::DuplicateClass(*class));
        }
        for (class, indices) in by_class {
            let take = self.per_class_capacity.min(indices.len());
            let samples = index::sample(rng, indices.len(), take)
                .into_iter()
                .map(|k| {
                    let row = indices[k];
                    StoredSample {
                        features: data.features.row(row).to_vec(),
                        label: data.labels[row],
                    }
                })
                .collect();
            self.store.insert(class, samples);
        }
        Ok(())
    }

    /// Whether every class holds exactly `per_class_capacity` samples.
    pub fn is_balanced(&self) -> bool {
        self.store.values().all(|s| s.len() == self.per_class_capacity)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SavedBuffer {
            version: BUFFER_FORMAT_VERSION,
            buffer: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let saved: SavedBuffer = serde_json::from_str(text)?;
        if saved.version != BUFFER_FORMAT_VERSION {
            return Err(Error::BufferVersion(saved.version));
        }
        Ok(saved.buffer)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn sample_at(&self, mut k: usize) -> &StoredSample {
        for samples in self.store.values() {
            if k < samples.len() {
                return &samples[k];
            }
            k -= samples.len();
        }
        unreachable!("sample index beyond buffer length")
    }
}

impl BatchSource for ReplayBuffer {
    /// Draws `batch_size` samples uniformly; without replacement unless the
    /// buffer is smaller than the batch.
    fn sample_batch(&self, batch_size: usize, rng: &mut Rng) -> Option<(Array2<Real>, Vec<usize>)> {
        let n = self.len();
        if n == 0 || batch_size == 0 {
            return None;
        }
        let picks: Vec<usize> = if n >= batch_size {
            index::sample(rng, n, batch_size).into_vec()
        } else {
            (0..batch_size).map(|_| rng.random_range(0..n)).collect()
        };
        let width = self.sample_at(0).features.len();
        let mut x = Array2::zeros((picks.len(), width));
        let mut y = Vec::with_capacity(picks.len());
        for (r, &k) in picks.iter().enumerate() {
            let s = self.sample_at(k);
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&s.features[..]));
            y.push(s.label);
        }
        Some((x, y))
    }
}

/// `CE(task) + lambda * CE(buffer)` over all outputs; the second term is
/// zero without a buffer batch.
pub fn replay_loss(
    net: &Network,
    task_batch: (ArrayView2<Real>, &[usize]),
    buffer_batch: Option<(ArrayView2<Real>, &[usize])>,
    lambda: Real,
) -> Result<Real> {
    let head = 0..net.output_width();
    let ce = |x: ArrayView2<Real>, y: &[usize]| -> Result<Real> {
        if x.ncols() != net.input_width() {
            return Err(Error::DimensionMismatch {
                expected: net.input_width(),
                got: x.ncols(),
            });
        }
        Ok(cross_entropy(net.run(x, None).logits(), y, &head).0)
    };
    let mut loss = ce(task_batch.0, task_batch.1)?;
    if let Some((x, y)) = buffer_batch {
        if x.nrows() > 0 {
            loss += lambda * ce(x, y)?;
        }
    }
    Ok(loss)
}

/// Mean of the final per-task accuracies.
pub fn average_accuracy(accuracies: &[f64]) -> f64 {
    if accuracies.is_empty() {
        return 0.0;
    }
    accuracies.iter().sum::<f64>() / accuracies.len() as f64
}

/// Outcome of one class-incremental run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIncrementalReport {
    /// Test accuracy of every task after the last one, predicting over all
    /// classes.
    pub accuracy_end: Vec<f64>,
    pub average_accuracy: f64,
    /// Row `i`: test accuracy of tasks `0..=i` right after task `i`.
    pub accuracy_matrix: Vec<Vec<f64>>,
    pub task_logs: Vec<TaskLog>,
    /// Buffer size and balance after every task.
    pub buffer_sizes: Vec<usize>,
    pub buffer_balanced: Vec<bool>,
    pub stable_counts: Vec<Vec<usize>>,
}

fn single_head_net(sequence: &TaskSequence, hidden: &[usize], density: f64, rng: &mut Rng) -> Result<Network> {
    let outputs = sequence.num_classes();
    let mut sizes = vec![sequence.input_width()];
    sizes.extend_from_slice(hidden);
    sizes.push(outputs);
    Network::init(&sizes, density, HeadLayout::single(outputs), rng)
}

fn final_accuracies(net: &Network, sequence: &TaskSequence) -> Result<Vec<f64>> {
    seen_accuracies(net, sequence, sequence.len())
}

fn seen_accuracies(net: &Network, sequence: &TaskSequence, seen: usize) -> Result<Vec<f64>> {
    sequence.tasks[..seen].iter().map(|t| net.evaluate(&t.test, 0)).collect()
}

/// NISPA with a replay buffer on a class-incremental sequence. Labels are
/// global class ids and every output is one class.
pub fn run_class_incremental(
    sequence: &TaskSequence,
    hidden: &[usize],
    config: &NispaConfig,
    replay: &ReplayConfig,
    rng: &mut Rng,
) -> Result<ClassIncrementalReport> {
    replay.validate()?;
    let net = single_head_net(sequence, hidden, config.density, rng)?;
    let mut state = LearnerState::new(net, config);
    let mut buffer = ReplayBuffer::new(replay.per_class_capacity);
    let mut report = empty_report();
    for (t, task) in sequence.tasks.iter().enumerate() {
        let lo = task.classes.iter().copied().min().unwrap_or(0);
        let hi = task.classes.iter().copied().max().map_or(0, |c| c + 1);
        let options = TaskOptions {
            head: 0,
            protected_outputs: Some(lo..hi),
            freeze_outputs: false,
            reinit: false,
            memory: Some((&buffer as &dyn BatchSource, replay.lambda as Real)),
        };
        let log = run_task(&mut state, task, t, config, options, rng)?;
        report.accuracy_matrix.push(seen_accuracies(&state.net, sequence, t + 1)?);
        report.stable_counts.push(log.stable_counts.clone());
        report.task_logs.push(log);
        buffer.update(&task.train, rng)?;
        report.buffer_sizes.push(buffer.len());
        report.buffer_balanced.push(buffer.is_balanced());
    }
    finish(report, &state.net, sequence)
}

/// Plain experience replay: phase-level early stopping on the combined loss,
/// nothing else. A capacity of zero gives naive fine-tuning.
pub fn run_er_baseline(
    sequence: &TaskSequence,
    hidden: &[usize],
    config: &NispaConfig,
    replay: &ReplayConfig,
    rng: &mut Rng,
) -> Result<ClassIncrementalReport> {
    replay.validate()?;
    let mut net = single_head_net(sequence, hidden, config.density, rng)?;
    let mut optimizer = config.new_optimizer();
    let mut buffer = ReplayBuffer::new(replay.per_class_capacity);
    let mut report = empty_report();
    for (t, task) in sequence.tasks.iter().enumerate() {
        let memory = Some((&buffer as &dyn BatchSource, replay.lambda as Real));
        let log = train_until_plateau(&mut net, &mut optimizer, task, t, config, 0, memory, rng)?;
        report.accuracy_matrix.push(seen_accuracies(&net, sequence, t + 1)?);
        report.stable_counts.push(log.stable_counts.clone());
        report.task_logs.push(log);
        buffer.update(&task.train, rng)?;
        report.buffer_sizes.push(buffer.len());
        report.buffer_balanced.push(buffer.is_balanced());
    }
    finish(report, &net, sequence)
}

fn empty_report() -> ClassIncrementalReport {
    ClassIncrementalReport {
        accuracy_end: Vec::new(),
        average_accuracy: 0.0,
        accuracy_matrix: Vec::new(),
        task_logs: Vec::new(),
        buffer_sizes: Vec::new(),
        buffer_balanced: Vec::new(),
        stable_counts: Vec::new(),
    }
}

fn finish(mut report: ClassIncrementalReport, net: &Network, sequence: &TaskSequence) -> Result<ClassIncrementalReport> {
    report.accuracy_end = final_accuracies(net, sequence)?;
    report.average_accuracy = average_accuracy(&report.accuracy_end);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1};

    use super::*;
    use crate::engine::SparseLinearLayer;
    use crate::seeded_rng;

    fn three_classes(per_class: usize) -> Dataset {
        let n = 3 * per_class;
        let features = Array2::from_shape_fn((n, 2), |(r, c)| (r * 2 + c) as Real);
        let labels = (0..n).map(|r| r % 3).collect();
        Dataset::new(features, labels).unwrap()
    }

    #[test]
    fn update_fills_each_class_to_capacity() {
        let mut buffer = ReplayBuffer::new(10);
        buffer.update(&three_classes(20), &mut seeded_rng(0)).unwrap();
        assert_eq!(buffer.len(), 30);
        for c in 0..3 {
            assert_eq!(buffer.class_len(c), 10);
        }
        assert!(buffer.is_balanced());
    }

    #[test]
    fn small_classes_are_stored_whole() {
        let mut buffer = ReplayBuffer::new(10);
        buffer.update(&three_classes(4), &mut seeded_rng(0)).unwrap();
        assert_eq!(buffer.class_len(1), 4);
        assert!(!buffer.is_balanced());
    }

    #[test]
    fn update_is_deterministic() {
        let mut a = ReplayBuffer::new(5);
        let mut b = ReplayBuffer::new(5);
        a.update(&three_classes(20), &mut seeded_rng(3)).unwrap();
        b.update(&three_classes(20), &mut seeded_rng(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_class_is_rejected() {
        let mut buffer = ReplayBuffer::new(5);
        buffer.update(&three_classes(6), &mut seeded_rng(0)).unwrap();
        let before = buffer.clone();
        assert!(matches!(
            buffer.update(&three_classes(6), &mut seeded_rng(0)),
            Err(Error::DuplicateClass(0))
        ));
        assert_eq!(buffer, before);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let mut buffer = ReplayBuffer::new(2);
        buffer.update(&three_classes(4), &mut seeded_rng(1)).unwrap();
        let text = buffer.to_json().unwrap();
        assert_eq!(ReplayBuffer::from_json(&text).unwrap(), buffer);
        let bumped = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(ReplayBuffer::from_json(&bumped), Err(Error::BufferVersion(9))));
    }

    #[test]
    fn sampling_with_and_without_replacement() {
        let mut buffer = ReplayBuffer::new(2);
        let mut rng = seeded_rng(2);
        assert!(buffer.sample_batch(4, &mut rng).is_none());
        buffer.update(&three_classes(4), &mut rng).unwrap();
        let (x, y) = buffer.sample_batch(16, &mut rng).unwrap();
        assert_eq!((x.nrows(), y.len()), (16, 16));
        let (_, y) = buffer.sample_batch(6, &mut rng).unwrap();
        let mut counts = [0; 3];
        for label in y {
            counts[label] += 1;
        }
        assert_eq!(counts, [2, 2, 2]);
    }

    fn toy_net() -> Network {
        let layer = SparseLinearLayer::dense(array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]], Array1::zeros(3));
        Network::from_layers(vec![layer], HeadLayout::single(3)).unwrap()
    }

    #[test]
    fn replay_loss_combines_terms() {
        let net = toy_net();
        let x = array![[1.0, 2.0], [0.0, -1.0]];
        let y = [0, 2];
        let plain = replay_loss(&net, (x.view(), &y), None, 5.0).unwrap();
        let zero = replay_loss(&net, (x.view(), &y), Some((x.view(), &y)), 0.0).unwrap();
        let double = replay_loss(&net, (x.view(), &y), Some((x.view(), &y)), 1.0).unwrap();
        assert_eq!(plain, zero);
        assert!((double - 2.0 * plain).abs() < 1e-15);
        let empty = Array2::zeros((0, 2));
        assert_eq!(replay_loss(&net, (x.view(), &y), Some((empty.view(), &[])), 3.0).unwrap(), plain);
    }

    #[test]
    fn average_accuracy_example() {
        assert_eq!(average_accuracy(&[1.0, 0.5]), 0.75);
    }
}

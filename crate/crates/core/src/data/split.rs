use rand::seq::SliceRandom;

use super::{Dataset, Task, TaskSequence};
use crate::error::{Error, Result};
use crate::Rng;

/// Splits off `val_fraction` of every class (rounded per class) as a
/// validation set. Returns `(train, val)`.
pub fn stratified_split(data: &Dataset, val_fraction: f64, rng: &mut Rng) -> (Dataset, Dataset) {
    let (mut train_idx, mut val_idx) = (Vec::new(), Vec::new());
    for (_, mut idx) in data.indices_by_class() {
        idx.shuffle(rng);
        let n_val = (val_fraction * idx.len() as f64).round() as usize;
        val_idx.extend_from_slice(&idx[..n_val]);
        train_idx.extend_from_slice(&idx[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    (data.subset(&train_idx), data.subset(&val_idx))
}

/// One task per class group. Training data is split 90/10 (or by
/// `val_fraction`) into train/validation per class; test data comes from the
/// separate held-out pool.
pub fn split_by_class(
    train_pool: &Dataset,
    test_pool: &Dataset,
    class_groups: &[Vec<usize>],
    val_fraction: f64,
    seed: u64,
) -> Result<TaskSequence> {
    let mut seen = std::collections::BTreeSet::new();
    for &c in class_groups.iter().flatten() {
        if !train_pool.class_ids.contains(&c) {
            return Err(Error::UnknownClass(c));
        }
        if !seen.insert(c) {
            return Err(Error::Config(format!("class {c} appears in more than one group")));
        }
    }
    let mut rng = crate::seeded_rng(seed);
    let tasks = class_groups
        .iter()
        .map(|group| {
            let (train, val) = stratified_split(&train_pool.filter_classes(group), val_fraction, &mut rng);
            Task {
                train,
                val,
                test: test_pool.filter_classes(group),
                classes: group.clone(),
            }
        })
        .collect();
    Ok(TaskSequence { tasks })
}

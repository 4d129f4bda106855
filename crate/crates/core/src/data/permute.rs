use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::split::stratified_split;
use super::{Dataset, Task, TaskSequence};
use crate::error::{Error, Result};

/// Shuffle a fraction `p_r` of the feature positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationSpec {
    pub p_r: f64,
    pub seed: u64,
}

/// A bijection on feature indices: output feature `j` reads input feature
/// `source[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    source: Vec<usize>,
}

impl Permutation {
    pub fn identity(width: usize) -> Self {
        Self {
            source: (0..width).collect(),
        }
    }

    /// Picks `round(p_r * width)` positions uniformly and applies a uniformly
    /// random permutation among them. Fixed points are allowed.
    pub fn from_spec(spec: PermutationSpec, width: usize) -> Self {
        let mut rng = crate::seeded_rng(spec.seed);
        let count = ((spec.p_r.clamp(0.0, 1.0) * width as f64).round() as usize).min(width);
        let mut chosen = index::sample(&mut rng, width, count).into_vec();
        chosen.sort_unstable();
        let mut shuffled = chosen.clone();
        shuffled.shuffle(&mut rng);
        let mut perm = Self::identity(width);
        for (&dst, &src) in chosen.iter().zip(&shuffled) {
            perm.source[dst] = src;
        }
        perm
    }

    pub fn width(&self) -> usize {
        self.source.len()
    }

    /// Positions whose feature moved.
    pub fn moved(&self) -> usize {
        self.source.iter().enumerate().filter(|(j, &s)| *j != s).count()
    }

    pub fn inverse(&self) -> Self {
        let mut source = vec![0; self.source.len()];
        for (j, &s) in self.source.iter().enumerate() {
            source[s] = j;
        }
        Self { source }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.width() != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                got: data.width(),
            });
        }
        let mut out = data.clone();
        for (src, mut dst) in data.features.rows().into_iter().zip(out.features.rows_mut()) {
            for (j, &s) in self.source.iter().enumerate() {
                dst[j] = src[s];
            }
        }
        Ok(out)
    }
}

/// Applies the permutation described by `spec` to every sample.
pub fn permute_pixels(data: &Dataset, spec: PermutationSpec) -> Result<Dataset> {
    Permutation::from_spec(spec, data.width()).apply(data)
}

/// `n_tasks` tasks over the same data: the first is unpermuted, task `t`
/// shuffles a fraction `p_r` of the pixels with its own permutation. When
/// `offset_labels` is set, task `t`'s labels are shifted by
/// `t * num_classes` so each task maps onto its own output head.
pub fn permuted_sequence(
    train_pool: &Dataset,
    test_pool: &Dataset,
    n_tasks: usize,
    p_r: f64,
    val_fraction: f64,
    seed: u64,
    offset_labels: bool,
) -> Result<TaskSequence> {
    let num_classes = train_pool.class_ids.iter().max().map_or(0, |&c| c + 1);
    let mut rng = crate::seeded_rng(seed);
    let mut tasks = Vec::with_capacity(n_tasks);
    for t in 0..n_tasks {
        let perm = if t == 0 {
            Permutation::identity(train_pool.width())
        } else {
            Permutation::from_spec(
                PermutationSpec {
                    p_r,
                    seed: seed.wrapping_mul(1_000_003).wrapping_add(t as u64),
                },
                train_pool.width(),
            )
        };
        let offset = if offset_labels { t * num_classes } else { 0 };
        let train_all = perm.apply(train_pool)?.offset_labels(offset);
        let test = perm.apply(test_pool)?.offset_labels(offset);
        let (train, val) = stratified_split(&train_all, val_fraction, &mut rng);
        tasks.push(Task {
            classes: train_all.class_ids.iter().copied().collect(),
            train,
            val,
            test,
        });
    }
    Ok(TaskSequence { tasks })
}

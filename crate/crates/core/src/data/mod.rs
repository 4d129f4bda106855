//! Datasets and task sequences.

mod digits;
mod idx;
mod permute;
mod split;
mod synthetic;

use std::collections::BTreeSet;

use ndarray::{concatenate, Array2, Axis};

pub use digits::{bundled_digits, DIGITS_SIDE};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use permute::{permute_pixels, permuted_sequence, Permutation, PermutationSpec};
pub use split::{split_by_class, stratified_split};
pub use synthetic::{synthetic_gaussian_tasks, GaussianTaskSpec};

use crate::error::{Error, Result};
use crate::Real;

/// Labelled samples, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<Real>,
    pub labels: Vec<usize>,
    pub class_ids: BTreeSet<usize>,
}

impl Dataset {
    pub fn new(features: Array2<Real>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        let class_ids = labels.iter().copied().collect();
        Ok(Self {
            features,
            labels,
            class_ids,
        })
    }

    pub fn empty(width: usize) -> Self {
        Self {
            features: Array2::zeros((0, width)),
            labels: Vec::new(),
            class_ids: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let labels: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        Self {
            features: self.features.select(Axis(0), indices),
            class_ids: labels.iter().copied().collect(),
            labels,
        }
    }

    /// Samples whose label is in `classes`, keeping their order.
    pub fn filter_classes(&self, classes: &[usize]) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.subset(&idx)
    }

    /// Indices of each class, in row order.
    pub fn indices_by_class(&self) -> Vec<(usize, Vec<usize>)> {
        self.class_ids
            .iter()
            .map(|&c| (c, (0..self.len()).filter(|&i| self.labels[i] == c).collect()))
            .collect()
    }

    /// Rows of all parts stacked in order.
    pub fn concat(parts: &[&Dataset]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::EmptyDataset);
        };
        let views: Vec<_> = parts.iter().map(|d| d.features.view()).collect();
        let features = concatenate(Axis(0), &views).map_err(|_| Error::DimensionMismatch {
            expected: first.width(),
            got: parts.iter().map(|d| d.width()).find(|&w| w != first.width()).unwrap_or(0),
        })?;
        let labels = parts.iter().flat_map(|d| d.labels.iter().copied()).collect();
        Self::new(features, labels)
    }

    /// Adds `offset` to every label.
    pub fn offset_labels(&self, offset: usize) -> Self {
        let labels: Vec<usize> = self.labels.iter().map(|&y| y + offset).collect();
        Self {
            features: self.features.clone(),
            class_ids: labels.iter().copied().collect(),
            labels,
        }
    }

    /// Averages non-overlapping `factor`x`factor` blocks of square
    /// `side`x`side` images, e.g. 28x28 with factor 4 gives 7x7.
    pub fn avg_pool(&self, side: usize, factor: usize) -> Result<Self> {
        if side * side != self.width() || factor == 0 || side % factor != 0 {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                got: self.width(),
            });
        }
        let out_side = side / factor;
        let scale = 1.0 / (factor * factor) as Real;
        let mut out = Array2::zeros((self.len(), out_side * out_side));
        for (src, mut dst) in self.features.rows().into_iter().zip(out.rows_mut()) {
            for r in 0..side {
                for c in 0..side {
                    dst[(r / factor) * out_side + c / factor] += src[r * side + c] * scale;
                }
            }
        }
        Ok(Self {
            features: out,
            labels: self.labels.clone(),
            class_ids: self.class_ids.clone(),
        })
    }
}

/// One task: training, validation and test data plus its class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub classes: Vec<usize>,
}

/// Ordered tasks presented one after another.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
}

impl TaskSequence {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.width())
    }

    /// Largest class id plus one.
    pub fn num_classes(&self) -> usize {
        self.tasks
            .iter()
            .flat_map(|t| t.classes.iter())
            .max()
            .map_or(0, |&c| c + 1)
    }
}

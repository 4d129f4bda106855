use ndarray::{Array1, Array2};
use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Real, Rng};

/// One masked fully connected layer.
///
/// `weights[[i, j]]` is the connection from unit `j` of the previous layer
/// into unit `i` of this layer. A position with `mask == false` always holds
/// an exact zero weight, and a frozen position always has `mask == true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLinearLayer {
    pub(crate) weights: Array2<Real>,
    pub(crate) mask: Array2<bool>,
    pub(crate) frozen: Array2<bool>,
    pub(crate) bias: Array1<Real>,
    pub(crate) bias_frozen: Array1<bool>,
}

impl SparseLinearLayer {
    /// Empty layer: no connections, zero bias, nothing frozen.
    pub fn empty(out_units: usize, in_units: usize) -> Self {
        Self {
            weights: Array2::zeros((out_units, in_units)),
            mask: Array2::from_elem((out_units, in_units), false),
            frozen: Array2::from_elem((out_units, in_units), false),
            bias: Array1::zeros(out_units),
            bias_frozen: Array1::from_elem(out_units, false),
        }
    }

    /// Fully connected layer with the given weights.
    pub fn dense(weights: Array2<Real>, bias: Array1<Real>) -> Self {
        let (out_units, in_units) = weights.dim();
        assert_eq!(bias.len(), out_units, "bias length must equal out_units");
        Self {
            weights,
            mask: Array2::from_elem((out_units, in_units), true),
            frozen: Array2::from_elem((out_units, in_units), false),
            bias,
            bias_frozen: Array1::from_elem(out_units, false),
        }
    }

    /// Kaiming-normal weights on a uniformly random set of exactly
    /// `round(density * out_units * in_units)` positions.
    pub fn random(out_units: usize, in_units: usize, density: f64, rng: &mut Rng) -> Self {
        let mut layer = Self::empty(out_units, in_units);
        let total = out_units * in_units;
        let count = ((density * total as f64).round() as usize).min(total);
        let mut chosen = index::sample(rng, total, count).into_vec();
        chosen.sort_unstable();
        let normal = kaiming(in_units);
        for flat in chosen {
            let pos = (flat / in_units, flat % in_units);
            layer.mask[pos] = true;
            layer.weights[pos] = normal.sample(rng);
        }
        layer
    }

    pub fn out_units(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_units(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<Real> {
        &self.weights
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn frozen(&self) -> &Array2<bool> {
        &self.frozen
    }

    pub fn bias(&self) -> &Array1<Real> {
        &self.bias
    }

    pub fn bias_frozen(&self) -> &Array1<bool> {
        &self.bias_frozen
    }

    /// Number of existing connections.
    pub fn connection_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn possible_connections(&self) -> usize {
        self.mask.len()
    }

    pub fn density(&self) -> f64 {
        self.connection_count() as f64 / self.possible_connections() as f64
    }

    pub fn has_connection(&self, target: usize, source: usize) -> bool {
        self.mask[(target, source)]
    }

    pub fn is_trainable(&self, target: usize, source: usize) -> bool {
        self.mask[(target, source)] && !self.frozen[(target, source)]
    }

    /// Sets a weight on an existing, unfrozen connection.
    pub fn set_weight(&mut self, target: usize, source: usize, value: Real) {
        assert!(
            self.is_trainable(target, source),
            "weight ({target}, {source}) is absent or frozen"
        );
        self.weights[(target, source)] = value;
    }

    pub fn set_bias(&mut self, unit: usize, value: Real) {
        assert!(!self.bias_frozen[unit], "bias of unit {unit} is frozen");
        self.bias[unit] = value;
    }

    /// Creates a new unfrozen connection.
    pub fn add_connection(&mut self, target: usize, source: usize, weight: Real) {
        debug_assert!(!self.mask[(target, source)]);
        self.mask[(target, source)] = true;
        self.frozen[(target, source)] = false;
        self.weights[(target, source)] = weight;
    }

    /// Removes a connection and zeroes its weight. Frozen connections cannot
    /// be removed.
    pub fn remove_connection(&mut self, target: usize, source: usize) {
        assert!(
            !self.frozen[(target, source)],
            "frozen connection ({target}, {source}) cannot be removed"
        );
        self.mask[(target, source)] = false;
        self.weights[(target, source)] = 0.0;
    }

    /// Sources feeding `target`.
    pub fn incoming(&self, target: usize) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .row(target)
            .into_iter()
            .enumerate()
            .filter_map(|(j, &m)| m.then_some(j))
    }

    /// Targets fed by `source`.
    pub fn outgoing(&self, source: usize) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .column(source)
            .into_iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    /// Freezes every existing incoming connection of `unit` and its bias.
    pub fn freeze_unit(&mut self, unit: usize) {
        let (mask, mut frozen) = (self.mask.row(unit), self.frozen.row_mut(unit));
        frozen.assign(&mask);
        self.bias_frozen[unit] = true;
    }

    pub fn unfreeze_unit(&mut self, unit: usize) {
        self.frozen.row_mut(unit).fill(false);
        self.bias_frozen[unit] = false;
    }

    /// Checks the mask/frozen/weight invariants, returning a description of
    /// the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for ((pos, &m), (&f, &w)) in self
            .mask
            .indexed_iter()
            .zip(self.frozen.iter().zip(self.weights.iter()))
        {
            if f && !m {
                return Err(format!("position {pos:?} frozen without a connection"));
            }
            if !m && w != 0.0 {
                return Err(format!("position {pos:?} has weight {w} without a connection"));
            }
        }
        Ok(())
    }

    /// Mean and population standard deviation of the existing weights.
    pub(crate) fn existing_weight_moments(&self) -> (Real, Real) {
        let (mut n, mut sum) = (0usize, 0.0 as Real);
        for (&w, &m) in self.weights.iter().zip(self.mask.iter()) {
            if m {
                n += 1;
                sum += w;
            }
        }
        if n == 0 {
            return (0.0, 0.0);
        }
        let mean = sum / n as Real;
        let var = self
            .weights
            .iter()
            .zip(self.mask.iter())
            .filter(|(_, &m)| m)
            .map(|(&w, _)| (w - mean) * (w - mean))
            .sum::<Real>()
            / n as Real;
        (mean, var.sqrt())
    }
}

/// Zero-mean normal with variance `2 / fan_in`.
pub(crate) fn kaiming(fan_in: usize) -> Normal<Real> {
    let std = (2.0 / fan_in as Real).sqrt();
    Normal::new(0.0, std).expect("finite standard deviation")
}

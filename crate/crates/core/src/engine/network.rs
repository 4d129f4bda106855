use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::layer::SparseLinearLayer;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::{Real, Rng};

/// Rows evaluated per forward call when sweeping a whole dataset.
const EVAL_CHUNK: usize = 1024;

/// Maps each task id to a contiguous range of output units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLayout {
    heads: Vec<(usize, usize)>,
}

impl HeadLayout {
    /// Heads given as half-open `[start, end)` ranges, in task order.
    pub fn new(ranges: Vec<Range<usize>>) -> Self {
        Self {
            heads: ranges.into_iter().map(|r| (r.start, r.end)).collect(),
        }
    }

    /// One head spanning every output unit, for class-incremental use.
    pub fn single(outputs: usize) -> Self {
        Self::new(vec![0..outputs])
    }

    /// `tasks` consecutive heads of `classes_per_task` units each.
    pub fn uniform(tasks: usize, classes_per_task: usize) -> Self {
        Self::new(
            (0..tasks)
                .map(|t| t * classes_per_task..(t + 1) * classes_per_task)
                .collect(),
        )
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn range(&self, task: usize) -> Result<Range<usize>> {
        self.heads
            .get(task)
            .map(|&(a, b)| a..b)
            .ok_or(Error::UnknownTask(task))
    }

    /// Task owning an output unit.
    pub fn task_of(&self, unit: usize) -> Option<usize> {
        self.heads.iter().position(|&(a, b)| (a..b).contains(&unit))
    }

    pub fn outputs(&self) -> usize {
        self.heads.iter().map(|&(_, b)| b).max().unwrap_or(0)
    }

    fn validate(&self, outputs: usize) -> Result<()> {
        let fail = |detail: String| Error::InvalidHeadLayout { outputs, detail };
        let mut covered = vec![false; outputs];
        for &(a, b) in &self.heads {
            if a >= b || b > outputs {
                return Err(fail(format!("bad range {a}..{b}")));
            }
            for c in &mut covered[a..b] {
                if *c {
                    return Err(fail(format!("range {a}..{b} overlaps another head")));
                }
                *c = true;
            }
        }
        if let Some(u) = covered.iter().position(|c| !c) {
            return Err(fail(format!("output unit {u} belongs to no head")));
        }
        Ok(())
    }
}

/// Per-unit total activation over a dataset, hidden layers only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    /// `per_unit[h][i]`: summed activation of unit `i` in hidden layer `h`.
    pub per_unit: Vec<Vec<Real>>,
    /// Sum of `per_unit[h]`.
    pub per_layer_total: Vec<Real>,
}

impl ActivationTrace {
    pub fn zeros(widths: &[usize]) -> Self {
        Self {
            per_unit: widths.iter().map(|&w| vec![0.0; w]).collect(),
            per_layer_total: vec![0.0; widths.len()],
        }
    }

    /// Builds a trace from per-unit totals, deriving the layer totals.
    pub fn from_per_unit(per_unit: Vec<Vec<Real>>) -> Self {
        let per_layer_total = per_unit.iter().map(|u| u.iter().sum()).collect();
        Self {
            per_unit,
            per_layer_total,
        }
    }
}

/// Sparse ReLU multilayer perceptron with multi-head outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub(crate) layers: Vec<SparseLinearLayer>,
    heads: HeadLayout,
}

/// Activations from one forward sweep: `activations[0]` is the input,
/// `activations[l]` the post-ReLU output of hidden layer `l`, and the last
/// entry holds raw (unmasked) logits.
pub(crate) struct ForwardPass {
    pub activations: Vec<Array2<Real>>,
}

impl ForwardPass {
    pub fn logits(&self) -> &Array2<Real> {
        self.activations.last().expect("at least one layer")
    }
}

/// Hidden units whose outputs are forced to zero, `silenced[h][i]`.
pub type UnitSilence = Vec<Vec<bool>>;

impl Network {
    /// Random sparse network with Kaiming-normal weights and zero biases.
    pub fn init(
        layer_sizes: &[usize],
        density: f64,
        heads: HeadLayout,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidDensity(density));
        }
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidLayerSizes(layer_sizes.to_vec()));
        }
        heads.validate(*layer_sizes.last().unwrap())?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| SparseLinearLayer::random(w[1], w[0], density, rng))
            .collect();
        Ok(Self { layers, heads })
    }

    /// Same as [`Network::init`] with a fresh generator built from `seed`.
    pub fn init_seeded(
        layer_sizes: &[usize],
        density: f64,
        heads: HeadLayout,
        seed: u64,
    ) -> Result<Self> {
        Self::init(layer_sizes, density, heads, &mut crate::seeded_rng(seed))
    }

    /// Assembles a network from explicit layers.
    pub fn from_layers(layers: Vec<SparseLinearLayer>, heads: HeadLayout) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidLayerSizes(vec![]));
        };
        for w in layers.windows(2) {
            if w[1].in_units() != w[0].out_units() {
                return Err(Error::DimensionMismatch {
                    expected: w[0].out_units(),
                    got: w[1].in_units(),
                });
            }
        }
        heads.validate(last.out_units())?;
        Ok(Self { layers, heads })
    }

    pub fn layers(&self) -> &[SparseLinearLayer] {
        &self.layers
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut SparseLinearLayer {
        &mut self.layers[l]
    }

    pub fn heads(&self) -> &HeadLayout {
        &self.heads
    }

    /// Unit counts from input to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_units())
            .chain(self.layers.iter().map(|l| l.out_units()))
            .collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_units()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().out_units()
    }

    /// Widths of the hidden layers only.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.out_units())
            .collect()
    }

    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub(crate) fn run(&self, batch: ArrayView2<Real>, silence: Option<&UnitSilence>) -> ForwardPass {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.to_owned());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            debug_assert!(layer.check_invariants().is_ok());
            let input = activations.last().unwrap();
            let mut z = input.dot(&layer.weights.t());
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
                if let Some(silenced) = silence.map(|s| &s[l]) {
                    for (i, &off) in silenced.iter().enumerate() {
                        if off {
                            z.column_mut(i).fill(0.0);
                        }
                    }
                }
            }
            activations.push(z);
        }
        ForwardPass { activations }
    }

    fn check_width(&self, batch: &ArrayView2<Real>) -> Result<()> {
        if batch.ncols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                got: batch.ncols(),
            });
        }
        Ok(())
    }

    /// Logits with every unit outside the task's head set to negative
    /// infinity.
    pub fn forward(&self, batch: ArrayView2<Real>, task: usize) -> Result<Array2<Real>> {
        self.forward_silenced(batch, task, None)
    }

    /// [`Network::forward`] with selected hidden units forced to output zero.
    pub fn forward_silenced(
        &self,
        batch: ArrayView2<Real>,
        task: usize,
        silence: Option<&UnitSilence>,
    ) -> Result<Array2<Real>> {
        let head = self.heads.range(task)?;
        self.check_width(&batch)?;
        let mut logits = self.run(batch, silence).activations.pop().unwrap();
        for (u, mut col) in logits.axis_iter_mut(Axis(1)).enumerate() {
            if !head.contains(&u) {
                col.fill(Real::NEG_INFINITY);
            }
        }
        Ok(logits)
    }

    /// Predicted output unit per row: argmax inside the task head, lowest
    /// index on ties.
    pub fn predict(&self, batch: ArrayView2<Real>, task: usize) -> Result<Vec<usize>> {
        self.predict_silenced(batch, task, None)
    }

    pub(crate) fn predict_silenced(
        &self,
        batch: ArrayView2<Real>,
        task: usize,
        silence: Option<&UnitSilence>,
    ) -> Result<Vec<usize>> {
        let head = self.heads.range(task)?;
        self.check_width(&batch)?;
        let pass = self.run(batch, silence);
        Ok(pass
            .logits()
            .rows()
            .into_iter()
            .map(|row| argmax(row.slice(s![head.clone()]).iter().copied()) + head.start)
            .collect())
    }

    /// Fraction of correctly classified samples.
    pub fn evaluate(&self, data: &Dataset, task: usize) -> Result<f64> {
        self.evaluate_silenced(data, task, None)
    }

    pub(crate) fn evaluate_silenced(
        &self,
        data: &Dataset,
        task: usize,
        silence: Option<&UnitSilence>,
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0usize;
        for (start, chunk) in chunks(data.len()) {
            let rows = data.features.slice(s![start..start + chunk, ..]);
            let preds = self.predict_silenced(rows, task, silence)?;
            correct += preds
                .iter()
                .zip(&data.labels[start..start + chunk])
                .filter(|(p, y)| p == y)
                .count();
        }
        Ok(correct as f64 / data.len() as f64)
    }

    /// Sums each hidden unit's activation over the dataset. Parameters are
    /// not touched; the output layer is excluded.
    pub fn accumulate_activations(&self, data: &Dataset) -> Result<ActivationTrace> {
        let widths = self.hidden_widths();
        let mut per_unit: Vec<Array1<Real>> = widths.iter().map(|&w| Array1::zeros(w)).collect();
        if !data.is_empty() {
            self.check_width(&data.features.view())?;
        }
        for (start, chunk) in chunks(data.len()) {
            let rows = data.features.slice(s![start..start + chunk, ..]);
            let pass = self.run(rows, None);
            for (h, acc) in per_unit.iter_mut().enumerate() {
                *acc += &pass.activations[h + 1].sum_axis(Axis(0));
            }
        }
        Ok(ActivationTrace::from_per_unit(
            per_unit.into_iter().map(|a| a.to_vec()).collect(),
        ))
    }

    /// Hidden-layer activations for a batch, one matrix per hidden layer.
    pub fn hidden_activations(&self, batch: ArrayView2<Real>) -> Result<Vec<Array2<Real>>> {
        self.check_width(&batch)?;
        let mut acts = self.run(batch, None).activations;
        acts.pop();
        acts.remove(0);
        Ok(acts)
    }

    /// Validates every layer's structural invariants.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.check_invariants().map_err(|e| format!("layer {l}: {e}"))?;
        }
        Ok(())
    }
}

fn chunks(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n)
        .step_by(EVAL_CHUNK)
        .map(move |start| (start, EVAL_CHUNK.min(n - start)))
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(values: impl Iterator<Item = Real>) -> usize {
    let mut best = (0, Real::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 || i == 0 {
            best = (i, v);
        }
    }
    best.0
}

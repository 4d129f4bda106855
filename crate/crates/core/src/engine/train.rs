use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::optim::OptimizerState;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::{Real, Rng};

/// Dense gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<Real>>,
    pub biases: Vec<Array1<Real>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Gradients, scale: Real) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(scale, b);
        }
    }

    /// Multiplies weight gradients by `mask AND NOT frozen` and zeroes the
    /// gradients of frozen biases.
    pub fn mask_to(&mut self, net: &Network) {
        for (g, layer) in self.weights.iter_mut().zip(&net.layers) {
            ndarray::Zip::from(g)
                .and(&layer.mask)
                .and(&layer.frozen)
                .for_each(|g, &m, &f| {
                    if !m || f {
                        *g = 0.0;
                    }
                });
        }
        for (g, layer) in self.biases.iter_mut().zip(&net.layers) {
            ndarray::Zip::from(g).and(&layer.bias_frozen).for_each(|g, &f| {
                if f {
                    *g = 0.0;
                }
            });
        }
    }
}

/// Mean softmax cross-entropy over the units in `head`, and its gradient
/// with respect to the raw logits (zero outside the head).
pub fn cross_entropy(logits: &Array2<Real>, labels: &[usize], head: &Range<usize>) -> (Real, Array2<Real>) {
    let n = logits.nrows();
    let mut grad = Array2::zeros(logits.dim());
    if n == 0 {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for (r, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = head.clone().map(|u| row[u]).fold(Real::NEG_INFINITY, Real::max);
        let denom: Real = head.clone().map(|u| (row[u] - max).exp()).sum();
        let log_denom = denom.ln() + max;
        loss += log_denom - row[y];
        for u in head.clone() {
            grad[(r, u)] = (row[u] - log_denom).exp() / n as Real;
        }
        grad[(r, y)] -= 1.0 / n as Real;
    }
    (loss / n as Real, grad)
}

/// Loss and raw (unmasked) parameter gradients for one batch.
pub fn loss_and_gradients(
    net: &Network,
    batch: ArrayView2<Real>,
    labels: &[usize],
    head: &Range<usize>,
) -> (Real, Gradients) {
    let pass = net.run(batch, None);
    let (loss, mut delta) = cross_entropy(pass.logits(), labels, head);
    let mut grads = Gradients::zeros_like(net);
    for l in (0..net.layers.len()).rev() {
        let input = &pass.activations[l];
        grads.weights[l] = delta.t().dot(input);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&net.layers[l].weights);
            ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    (loss, grads)
}

/// A source of auxiliary minibatches mixed into every training step.
pub trait BatchSource {
    /// Draws up to `batch_size` samples, or `None` when empty.
    fn sample_batch(&self, batch_size: usize, rng: &mut Rng) -> Option<(Array2<Real>, Vec<usize>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
}

/// Mean loss over all steps of the last epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub steps: usize,
    pub last_epoch_loss: Real,
}

/// Trains for exactly `params.epochs` passes over shuffled minibatches with
/// softmax cross-entropy on the task head.
pub fn train_epochs(
    net: &mut Network,
    opt: &mut OptimizerState,
    data: &Dataset,
    task: usize,
    params: TrainParams,
    rng: &mut Rng,
) -> Result<TrainStats> {
    train_epochs_with(net, opt, data, task, params, None, rng)
}

/// [`train_epochs`] where every step also draws a minibatch from `aux` and
/// adds `weight` times its loss.
pub fn train_epochs_with(
    net: &mut Network,
    opt: &mut OptimizerState,
    data: &Dataset,
    task: usize,
    params: TrainParams,
    aux: Option<(&dyn BatchSource, Real)>,
    rng: &mut Rng,
) -> Result<TrainStats> {
    let head = net.heads().range(task)?;
    if let Some(&label) = data.labels.iter().find(|y| !head.contains(y)) {
        return Err(Error::LabelOutsideHead { label, task });
    }
    if !data.is_empty() && data.features.ncols() != net.input_width() {
        return Err(Error::DimensionMismatch {
            expected: net.input_width(),
            got: data.features.ncols(),
        });
    }
    let batch_size = params.batch_size.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut stats = TrainStats::default();
    for _ in 0..params.epochs {
        order.shuffle(rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for idx in order.chunks(batch_size) {
            let x = data.features.select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (mut loss, mut grads) = loss_and_gradients(net, x.view(), &y, &head);
            if let Some((source, weight)) = aux.filter(|&(_, w)| w != 0.0) {
                if let Some((bx, by)) = source.sample_batch(batch_size, rng) {
                    let (aux_loss, aux_grads) = loss_and_gradients(net, bx.view(), &by, &head);
                    loss += weight * aux_loss;
                    grads.add_scaled(&aux_grads, weight);
                }
            }
            grads.mask_to(net);
            opt.step(net, &grads);
            total += loss;
            steps += 1;
        }
        stats.steps += steps;
        stats.last_epoch_loss = if steps > 0 { total / steps as Real } else { 0.0 };
    }
    Ok(stats)
}

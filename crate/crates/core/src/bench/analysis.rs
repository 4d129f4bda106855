use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::data::{Dataset, Task};
use crate::engine::{train_epochs, HeadLayout, Network, TrainParams, UnitSilence};
use crate::error::{Error, Result};
use crate::{seeded_rng, Real, Rng};

/// Skewness of one sample. Zero-variance samples report `g1 = 0` and set
/// the flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skewness {
    pub g1: f64,
    pub zero_variance: bool,
}

/// `m3 / m2^1.5` with biased central moments.
pub fn sample_skewness(values: &[f64]) -> Skewness {
    let n = values.len() as f64;
    if values.is_empty() {
        return Skewness { g1: 0.0, zero_variance: true };
    }
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(a, b), &x| {
        let d = x - mean;
        (a + d * d, b + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    // relative threshold so that rounding noise in a constant sample is not
    // mistaken for spread
    let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if m2 <= (scale * 1e-12).powi(2) {
        return Skewness { g1: 0.0, zero_variance: true };
    }
    Skewness {
        g1: m3 / m2.powf(1.5),
        zero_variance: false,
    }
}

/// Skewness of the per-unit total activations of every hidden layer.
pub fn skewness_analysis(net: &Network, data: &Dataset) -> Result<Vec<Skewness>> {
    let trace = net.accumulate_activations(data)?;
    Ok(trace
        .per_unit
        .iter()
        .map(|layer| sample_skewness(&layer.iter().map(|&v| v as f64).collect::<Vec<_>>()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewnessReport {
    /// `per_epoch[e][l]`: layer `l` after epoch `e + 1`.
    pub per_epoch: Vec<Vec<Skewness>>,
    pub final_accuracy: f64,
}

impl SkewnessReport {
    pub fn min_g1(&self) -> f64 {
        self.per_epoch
            .iter()
            .flatten()
            .map(|s| s.g1)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Trains `net` on `task` one epoch at a time and records the skewness on
/// the training data after each epoch.
pub fn skewness_over_training(
    net: &mut Network,
    config: &ExperimentConfig,
    task: &Task,
    head: usize,
    epochs: usize,
    rng: &mut Rng,
) -> Result<SkewnessReport> {
    let nispa = config.nispa(config.seed);
    let mut opt = nispa.new_optimizer();
    let params = TrainParams {
        epochs: 1,
        batch_size: nispa.batch_size,
    };
    let mut per_epoch = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        train_epochs(net, &mut opt, &task.train, head, params, rng)?;
        per_epoch.push(skewness_analysis(net, &task.train)?);
    }
    Ok(SkewnessReport {
        per_epoch,
        final_accuracy: net.evaluate(&task.test, head)?,
    })
}

/// Single-head network over every class of the configured data source,
/// plus that merged task.
pub fn analysis_model(config: &ExperimentConfig, seed: u64, rng: &mut Rng) -> Result<(Network, Task)> {
    let task = config.build_single_task(seed)?;
    let outputs = task.classes.iter().copied().max().map_or(0, |c| c + 1);
    let mut sizes = vec![task.train.width()];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(outputs);
    let net = Network::init(&sizes, config.density, HeadLayout::single(outputs), rng)?;
    Ok((net, task))
}

/// Trains a fresh analysis model for `epochs` epochs and records skewness
/// after each one.
pub fn train_and_measure_skewness(config: &ExperimentConfig, seed: u64, epochs: usize) -> Result<(Network, Task, SkewnessReport)> {
    let mut rng = seeded_rng(seed);
    let (mut net, task) = analysis_model(config, seed, &mut rng)?;
    let report = skewness_over_training(&mut net, config, &task, 0, epochs, &mut rng)?;
    Ok((net, task, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    /// The `k` units with the largest activation totals in each layer.
    TopActive,
    /// `k` uniformly random units in each layer.
    Random,
}

/// Test accuracy after silencing `k` units in every hidden layer, one entry
/// per `k`. Activation totals are measured on `rank_data`. The network is
/// not modified.
pub fn ablation_removal_curve(
    net: &Network,
    rank_data: &Dataset,
    eval_data: &Dataset,
    task: usize,
    ks: &[usize],
    mode: RemovalMode,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let widths = net.hidden_widths();
    if let Some(&k) = ks.iter().max() {
        if let Some(&size) = widths.iter().find(|&&w| k > w) {
            return Err(Error::AblationTooLarge { k, size });
        }
    }
    let trace = net.accumulate_activations(rank_data)?;
    ks.iter()
        .map(|&k| {
            let silence: UnitSilence = widths
                .iter()
                .enumerate()
                .map(|(h, &w)| {
                    let chosen = match mode {
                        RemovalMode::TopActive => top_units(&trace.per_unit[h], k),
                        RemovalMode::Random => index::sample(rng, w, k).into_vec(),
                    };
                    let mut off = vec![false; w];
                    for u in chosen {
                        off[u] = true;
                    }
                    off
                })
                .collect();
            net.evaluate_silenced(eval_data, task, Some(&silence))
        })
        .collect()
}

/// Indices of the `k` largest values, lowest index first on ties.
fn top_units(values: &[Real], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

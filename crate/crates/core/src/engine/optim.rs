use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::train::Gradients;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m_w: Array2<Real>,
    v_w: Array2<Real>,
    m_b: Array1<Real>,
    v_b: Array1<Real>,
}

/// Optimizer hyperparameters and per-weight state.
///
/// Only positions that exist and are not frozen are ever read or written.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: Real,
    beta1: Real,
    beta2: Real,
    eps: Real,
    step: i32,
    moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: Real) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: Real) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: Real) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> Real {
        self.learning_rate
    }

    /// Clears all accumulated state.
    pub fn reset(&mut self) {
        self.step = 0;
        self.moments.clear();
    }

    /// Zeroes the moments of individual weights in layer `l`.
    pub fn reset_positions(&mut self, l: usize, positions: &[(usize, usize)]) {
        if let Some(m) = self.moments.get_mut(l) {
            for &p in positions {
                m.m_w[p] = 0.0;
                m.v_w[p] = 0.0;
            }
        }
    }

    fn ensure_moments(&mut self, net: &Network) {
        let fits = self.moments.len() == net.layers.len()
            && self
                .moments
                .iter()
                .zip(&net.layers)
                .all(|(m, l)| m.m_w.dim() == l.weights.dim());
        if !fits {
            self.moments = net
                .layers
                .iter()
                .map(|l| Moments {
                    m_w: Array2::zeros(l.weights.dim()),
                    v_w: Array2::zeros(l.weights.dim()),
                    m_b: Array1::zeros(l.bias.len()),
                    v_b: Array1::zeros(l.bias.len()),
                })
                .collect();
        }
    }

    /// Applies one update. Absent or frozen weights and frozen biases are
    /// left bit-identical regardless of the gradient values.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
                    Zip::from(&mut layer.weights)
                        .and(gw)
                        .and(&layer.mask)
                        .and(&layer.frozen)
                        .for_each(|w, &g, &m, &f| {
                            if m && !f {
                                *w -= lr * g;
                            }
                        });
                    Zip::from(&mut layer.bias)
                        .and(gb)
                        .and(&layer.bias_frozen)
                        .for_each(|b, &g, &f| {
                            if !f {
                                *b -= lr * g;
                            }
                        });
                }
            }
            OptimizerKind::Adam => {
                self.ensure_moments(net);
                self.step += 1;
                let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
                let lr_t = lr * (1.0 - b2.powi(self.step)).sqrt() / (1.0 - b1.powi(self.step));
                let update = |p: &mut Real, m: &mut Real, v: &mut Real, g: Real| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + eps);
                };
                for ((layer, mom), (gw, gb)) in net
                    .layers
                    .iter_mut()
                    .zip(self.moments.iter_mut())
                    .zip(grads.weights.iter().zip(&grads.biases))
                {
                    Zip::from(&mut layer.weights)
                        .and(&mut mom.m_w)
                        .and(&mut mom.v_w)
                        .and(gw)
                        .and(&layer.mask)
                        .and(&layer.frozen)
                        .for_each(|w, m, v, &g, &mk, &f| {
                            if mk && !f {
                                update(w, m, v, g);
                            }
                        });
                    Zip::from(&mut layer.bias)
                        .and(&mut mom.m_b)
                        .and(&mut mom.v_b)
                        .and(gb)
                        .and(&layer.bias_frozen)
                        .for_each(|b, m, v, &g, &f| {
                            if !f {
                                update(b, m, v, g);
                            }
                        });
                }
            }
        }
        debug_assert!(net.check_invariants().is_ok(), "{:?}", net.check_invariants());
    }
}

//! Mini-batch training with plain or adaptive-moment gradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GradientSet, Network};
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    /// Adaptive-moment defaults: step 0.005, decay 0.9/0.999, eps 1e-8.
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam(0.005)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Fixes the shuffle order; training is bit-deterministic per seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }
}

struct AdamState<T> {
    m: GradientSet<T>,
    v: GradientSet<T>,
    t: u32,
}

/// Trains a copy of `net` on `(input, label)` pairs and returns it.
///
/// Deterministic for a fixed seed: the same call yields bitwise-identical
/// parameters. `epochs == 0` returns the network unchanged.
pub fn train<T: Real>(
    net: &Network<T>,
    data: &[(Vec<T>, usize)],
    cfg: &TrainConfig,
) -> Result<Network<T>> {
    if data.is_empty() {
        return Err(Error::usage("training dataset is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::usage("batch size must be >= 1"));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: GradientSet::zeros_like(&net),
            v: GradientSet::zeros_like(&net),
            t: 0,
        }),
        Optimizer::Sgd { .. } => None,
    };
    let mut batch_x: Vec<Vec<T>> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(data[i].0.clone());
                batch_y.push(data[i].1);
            }
            let (_, grads) = net.loss_and_grads(&batch_x, &batch_y)?;
            step(&mut net, &grads, cfg.optimizer, adam.as_mut());
        }
    }
    Ok(net)
}

fn step<T: Real>(
    net: &mut Network<T>,
    grads: &GradientSet<T>,
    opt: Optimizer,
    adam: Option<&mut AdamState<T>>,
) {
    match opt {
        Optimizer::Sgd { lr } => {
            let lr = T::of(lr);
            for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
                for (w, &dw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w = *w - lr * dw;
                }
                for (b, &db) in layer.biases.iter_mut().zip(&g.biases) {
                    *b = *b - lr * db;
                }
            }
        }
        Optimizer::Adam { lr, beta1, beta2, eps } => {
            let state = adam.expect("adam state allocated");
            state.t += 1;
            let b1 = T::of(beta1);
            let b2 = T::of(beta2);
            let lr = T::of(lr);
            let eps = T::of(eps);
            let corr1 = T::one() - T::of(beta1.powi(state.t as i32));
            let corr2 = T::one() - T::of(beta2.powi(state.t as i32));
            for l in 0..net.layers.len() {
                let layer = &mut net.layers[l];
                let g = &grads.layers[l];
                let m = &mut state.m.layers[l];
                let v = &mut state.v.layers[l];
                adam_update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, b1, b2, lr, eps, corr1, corr2);
                adam_update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases, b1, b2, lr, eps, corr1, corr2);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    b1: T,
    b2: T,
    lr: T,
    eps: T,
    corr1: T,
    corr2: T,
) {
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

//! Dense feedforward classifier with exact reverse-mode gradients.
//!
//! The network is a stack of affine layers with an elementwise activation on
//! every hidden layer and a softmax over the final logits. It provides the two
//! gradient paths the rest of the crate consumes: parameter gradients for
//! training and input gradients for query crafting.

mod io;
mod train;

pub use io::{load_network, save_network};
pub use train::{train, Optimizer, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{argmax, Real};

/// Hidden-layer activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative evaluated from the pre-activation value.
    fn grad<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }
}

/// Architecture of a classifier: layer widths plus one activation per hidden
/// layer. The first width is the input dimension, the last the class count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    hidden_activations: Vec<Activation>,
}

impl NetworkSpec {
    /// Builds a spec with the same activation on every hidden layer.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let hidden = layer_sizes.len().saturating_sub(2);
        Self::with_activations(layer_sizes, vec![activation; hidden])
    }

    /// Builds a spec with a per-hidden-layer activation choice.
    pub fn with_activations(
        layer_sizes: Vec<usize>,
        hidden_activations: Vec<Activation>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::usage("a network needs at least 2 layers"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::usage("layer sizes must be >= 1"));
        }
        let classes = *layer_sizes.last().expect("nonempty");
        if classes < 2 {
            return Err(Error::usage("class count must be >= 2"));
        }
        if hidden_activations.len() != layer_sizes.len() - 2 {
            return Err(Error::usage(format!(
                "expected {} hidden activations, got {}",
                layer_sizes.len() - 2,
                hidden_activations.len()
            )));
        }
        Ok(NetworkSpec {
            layer_sizes,
            hidden_activations,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_activations(&self) -> &[Activation] {
        &self.hidden_activations
    }

    /// Activation of layer `l` (None for the output layer, which is linear).
    fn activation_of(&self, l: usize) -> Option<Activation> {
        self.hidden_activations.get(l).copied()
    }
}

/// One affine layer, weights row-major with shape `(out_dim, in_dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub(crate) weights: Vec<T>,
    pub(crate) biases: Vec<T>,
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
}

impl<T: Real> Dense<T> {
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            weights: vec![T::zero(); in_dim * out_dim],
            biases: vec![T::zero(); out_dim],
            in_dim,
            out_dim,
        }
    }

    fn forward_into(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = o * self.in_dim;
            let mut sum = self.biases[o];
            for (i, &x) in input.iter().enumerate() {
                sum = self.weights[row + i].mul_add(x, sum);
            }
            out.push(sum);
        }
    }

    /// `W^T d` — gradient flowing back to this layer's input.
    fn backward_input(&self, d_out: &[T]) -> Vec<T> {
        let mut d_in = vec![T::zero(); self.in_dim];
        for o in 0..self.out_dim {
            let row = o * self.in_dim;
            let d = d_out[o];
            for (i, di) in d_in.iter_mut().enumerate() {
                *di = self.weights[row + i].mul_add(d, *di);
            }
        }
        d_in
    }
}

/// Full parameter set of a classifier: the spec plus per-layer weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Dense<T>>,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Clone, Debug)]
pub struct GradientSet<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> GradientSet<T> {
    fn zeros_like(net: &Network<T>) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }
}

/// Differentiable scalar of the forward pass for input gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarHead {
    /// Cross-entropy loss at the given label.
    Loss { label: usize },
    /// A raw logit `Z_i`.
    Logit(usize),
    /// A softmax output `F_i`.
    Prob(usize),
    /// A logit difference `Z_up - Z_down`.
    LogitDiff { up: usize, down: usize },
}

/// Cached forward pass: logits, softmax outputs, and the per-layer values
/// needed to run the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardResult<T> {
    pub logits: Vec<T>,
    pub probs: Vec<T>,
    /// Input of each layer (`layer_inputs[0]` is the network input).
    layer_inputs: Vec<Vec<T>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Vec<T>>,
}

impl<T: Real> ForwardResult<T> {
    /// Predicted class: argmax of the softmax outputs, lowest index on ties.
    pub fn label(&self) -> usize {
        argmax(&self.probs)
    }
}

impl<T: Real> Network<T> {
    /// All-zero parameters (useful as a degenerate fixture).
    pub fn zeros(spec: NetworkSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Network { spec, layers }
    }

    /// Seeded initialization: weights uniform in ±sqrt(1/fan_in), biases zero.
    pub fn seeded(spec: NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::zeros(spec);
        for layer in &mut net.layers {
            let limit = (1.0 / layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::of(rng.random_range(-limit..limit));
            }
        }
        net
    }

    /// Builds a network from explicit per-layer weights and biases.
    /// Weight matrices are row-major `(out_dim, in_dim)`.
    pub fn from_parts(spec: NetworkSpec, parts: Vec<(Vec<T>, Vec<T>)>) -> Result<Self> {
        if parts.len() != spec.layer_sizes.len() - 1 {
            return Err(Error::usage(format!(
                "expected {} layers of parameters, got {}",
                spec.layer_sizes.len() - 1,
                parts.len()
            )));
        }
        let mut layers = Vec::with_capacity(parts.len());
        for (l, (weights, biases)) in parts.into_iter().enumerate() {
            let in_dim = spec.layer_sizes[l];
            let out_dim = spec.layer_sizes[l + 1];
            if weights.len() != in_dim * out_dim || biases.len() != out_dim {
                return Err(Error::usage(format!(
                    "layer {l}: expected {}x{} weights and {} biases",
                    out_dim, in_dim, out_dim
                )));
            }
            if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("layer {l}: non-finite parameter")));
            }
            layers.push(Dense {
                weights,
                biases,
                in_dim,
                out_dim,
            });
        }
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes()
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite input entry"));
        }
        Ok(())
    }

    /// Forward pass with caches for backprop.
    pub fn forward(&self, x: &[T]) -> Result<ForwardResult<T>> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut current = x.to_vec();
        let mut z = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&current, &mut z);
            layer_inputs.push(std::mem::take(&mut current));
            pre_activations.push(z.clone());
            current = match self.spec.activation_of(l) {
                Some(act) => z.iter().map(|&v| act.apply(v)).collect(),
                None => z.clone(),
            };
        }
        let logits = current;
        let probs = softmax(&logits);
        Ok(ForwardResult {
            logits,
            probs,
            layer_inputs,
            pre_activations,
        })
    }

    /// Softmax outputs only.
    pub fn probs(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.probs)
    }

    /// Predicted class label.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(self.forward(x)?.label())
    }

    /// Mean cross-entropy over a batch plus parameter gradients.
    ///
    /// Gradients are exact reverse-mode and average over the batch.
    pub fn loss_and_grads(&self, batch: &[Vec<T>], labels: &[usize]) -> Result<(T, GradientSet<T>)> {
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        if batch.len() != labels.len() {
            return Err(Error::usage(format!(
                "batch has {} samples but {} labels",
                batch.len(),
                labels.len()
            )));
        }
        let classes = self.n_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::domain(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let scale = T::of(1.0 / batch.len() as f64);
        let mut grads = GradientSet::zeros_like(self);
        let mut loss = T::zero();
        for (x, &y) in batch.iter().zip(labels) {
            let fwd = self.forward(x)?;
            loss += cross_entropy(&fwd.logits, y);
            // dL/dz = probs - onehot, scaled for the batch mean.
            let mut d_logits = fwd.probs.clone();
            d_logits[y] -= T::one();
            for d in &mut d_logits {
                *d *= scale;
            }
            self.backward(&fwd, d_logits, Some(&mut grads), false);
        }
        Ok((loss * scale, grads))
    }

    /// Gradient of a scalar head with respect to the input vector.
    pub fn input_gradient(&self, x: &[T], head: ScalarHead) -> Result<Vec<T>> {
        let fwd = self.forward(x)?;
        self.input_gradient_cached(&fwd, head)
    }

    /// Same as [`input_gradient`](Self::input_gradient) but reuses a forward pass.
    pub fn input_gradient_cached(&self, fwd: &ForwardResult<T>, head: ScalarHead) -> Result<Vec<T>> {
        let d_logits = self.head_seed(fwd, head)?;
        Ok(self
            .backward(fwd, d_logits, None, true)
            .expect("input gradient requested"))
    }

    /// Jacobian of the softmax outputs with respect to the input: one row per
    /// class, each of input length. Shares a single forward pass.
    pub fn prob_jacobian(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let fwd = self.forward(x)?;
        (0..self.n_classes())
            .map(|c| self.input_gradient_cached(&fwd, ScalarHead::Prob(c)))
            .collect()
    }

    /// Seed gradient dHead/dlogits for each scalar head.
    fn head_seed(&self, fwd: &ForwardResult<T>, head: ScalarHead) -> Result<Vec<T>> {
        let classes = self.n_classes();
        let check = |i: usize| -> Result<()> {
            if i >= classes {
                Err(Error::domain(format!(
                    "head index {i} out of range for {classes} classes"
                )))
            } else {
                Ok(())
            }
        };
        let mut seed = vec![T::zero(); classes];
        match head {
            ScalarHead::Loss { label } => {
                check(label)?;
                seed.copy_from_slice(&fwd.probs);
                seed[label] -= T::one();
            }
            ScalarHead::Logit(i) => {
                check(i)?;
                seed[i] = T::one();
            }
            ScalarHead::Prob(i) => {
                check(i)?;
                // dF_i/dz_j = F_i (delta_ij - F_j)
                let pi = fwd.probs[i];
                for (j, s) in seed.iter_mut().enumerate() {
                    let delta = if j == i { T::one() } else { T::zero() };
                    *s = pi * (delta - fwd.probs[j]);
                }
            }
            ScalarHead::LogitDiff { up, down } => {
                check(up)?;
                check(down)?;
                seed[up] += T::one();
                seed[down] -= T::one();
            }
        }
        Ok(seed)
    }

    /// Reverse pass from a logit-space seed gradient. Accumulates parameter
    /// gradients into `grads` when given; returns the input gradient when
    /// `want_input` is set.
    fn backward(
        &self,
        fwd: &ForwardResult<T>,
        d_logits: Vec<T>,
        mut grads: Option<&mut GradientSet<T>>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let mut d = d_logits;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[l];
                let input = &fwd.layer_inputs[l];
                for o in 0..layer.out_dim {
                    gl.biases[o] += d[o];
                    let row = o * layer.in_dim;
                    for (i, &xi) in input.iter().enumerate() {
                        gl.weights[row + i] = d[o].mul_add(xi, gl.weights[row + i]);
                    }
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut d_in = layer.backward_input(&d);
            if l > 0 {
                let act = self
                    .spec
                    .activation_of(l - 1)
                    .expect("layer below the output has an activation");
                for (di, &z) in d_in.iter_mut().zip(&fwd.pre_activations[l - 1]) {
                    *di = *di * act.grad(z);
                }
            }
            d = d_in;
        }
        Some(d)
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of a label against logits, computed via log-sum-exp.
fn cross_entropy<T: Real>(logits: &[T], label: usize) -> T {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lse = logits
        .iter()
        .map(|&v| (v - max).exp())
        .sum::<T>()
        .ln()
        + max;
    lse - logits[label]
}

#[cfg(test)]
mod tests;

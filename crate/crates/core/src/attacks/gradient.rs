//! Single-shot and iterative gradient-sign crafting, plus the raw-gradient
//! variant.

use super::{clamp01, finish, CraftFlag, CraftedSample, IgsAlpha};
use crate::error::Result;
use crate::net::{Network, ScalarHead};
use crate::num::{sign0, Real};

/// Pre-clip fast-gradient-sign perturbation: every component is exactly
/// `±lambda`, or 0 where the loss gradient vanishes.
pub fn fgsm_step<T: Real>(net: &Network<T>, x: &[T], lambda: f64) -> Result<Vec<T>> {
    let fwd = net.forward(x)?;
    let label = fwd.label();
    let grad = net.input_gradient_cached(&fwd, ScalarHead::Loss { label })?;
    let lambda = T::of(lambda);
    Ok(grad.into_iter().map(|g| lambda * sign0(g)).collect())
}

/// Fast gradient sign: one `±lambda` step along the loss-gradient sign,
/// clipped to the unit box. The gradient head is the cross-entropy at the
/// substitute's own predicted label.
pub fn fgsm<T: Real>(
    net: &Network<T>,
    x: &[T],
    source_index: usize,
    lambda: f64,
) -> Result<CraftedSample<T>> {
    let label_before = net.predict(x)?;
    let delta = fgsm_step(net, x, lambda)?;
    let mut x_adv: Vec<T> = x.iter().zip(&delta).map(|(&a, &d)| a + d).collect();
    clamp01(&mut x_adv);
    finish(net, x, x_adv, source_index, label_before, None)
}

/// Iterative gradient sign: repeated sign steps, each iterate clipped into
/// the epsilon-ball around the source and into the unit box, stopping early
/// once the substitute label flips.
pub fn igs<T: Real>(
    net: &Network<T>,
    x: &[T],
    source_index: usize,
    epsilon: f64,
    alpha: IgsAlpha,
    iters: usize,
) -> Result<CraftedSample<T>> {
    let (steps, step_size) = match alpha {
        IgsAlpha::Steps(n) => (n, epsilon / n as f64),
        IgsAlpha::StepSize(s) => (iters, s),
    };
    let eps = T::of(epsilon);
    let step = T::of(step_size);
    let label_before = net.predict(x)?;
    let mut cur = x.to_vec();
    for _ in 0..steps {
        let fwd = net.forward(&cur)?;
        if fwd.label() != label_before {
            break;
        }
        let grad = net.input_gradient_cached(&fwd, ScalarHead::Loss { label: label_before })?;
        for ((c, &orig), g) in cur.iter_mut().zip(x).zip(grad) {
            let moved = *c + step * sign0(g);
            // Constrain to the L-infinity epsilon-neighbourhood, then the box.
            *c = moved.max(orig - eps).min(orig + eps);
        }
        clamp01(&mut cur);
    }
    finish(net, x, cur, source_index, label_before, None)
}

/// Fast gradient value: a step along the raw (unsigned) loss gradient.
/// A vanished gradient returns the source unchanged, flagged.
pub fn fgv<T: Real>(
    net: &Network<T>,
    x: &[T],
    source_index: usize,
    lambda: f64,
) -> Result<CraftedSample<T>> {
    let fwd = net.forward(x)?;
    let label_before = fwd.label();
    let grad = net.input_gradient_cached(&fwd, ScalarHead::Loss { label: label_before })?;
    if grad.iter().all(|g| *g == T::zero()) {
        return finish(
            net,
            x,
            x.to_vec(),
            source_index,
            label_before,
            Some(CraftFlag::ZeroGradient),
        );
    }
    let lambda = T::of(lambda);
    let mut x_adv: Vec<T> = x.iter().zip(&grad).map(|(&a, &g)| a + lambda * g).collect();
    clamp01(&mut x_adv);
    finish(net, x, x_adv, source_index, label_before, None)
}

//! Boundary projection crafting: the minimal step that lands the sample on
//! the hyperplane separating the top two classes, iterated with overshoot.

use super::{clamp01, finish, CraftedSample};
use crate::error::{Error, Result};
use crate::net::{Network, ScalarHead};
use crate::num::{top2, Real};

/// One unscaled projection step.
///
/// With `g = Z_pred - Z_runnerup` (the top-two logit margin), the returned
/// perturbation is `-g * grad(g) / ||grad(g)||^2`: on an affine classifier it
/// lands exactly on the decision hyperplane.
pub fn deepfool_step<T: Real>(net: &Network<T>, x: &[T]) -> Result<Vec<T>> {
    let fwd = net.forward(x)?;
    let (pred, runner_up) = top2(&fwd.logits);
    let margin = fwd.logits[pred] - fwd.logits[runner_up];
    let grad = net.input_gradient_cached(
        &fwd,
        ScalarHead::LogitDiff {
            up: pred,
            down: runner_up,
        },
    )?;
    let norm_sq: T = grad.iter().map(|&g| g * g).sum();
    if norm_sq.sqrt() < T::of(1e-12) {
        return Err(Error::Numerical(
            "deepfool: singular gradient on the top-two logit margin".into(),
        ));
    }
    let scale = -margin / norm_sq;
    Ok(grad.into_iter().map(|g| g * scale).collect())
}

/// Iterated projection with overshoot `eta`, stopping once the substitute
/// label changes or `iters` is reached. Iterates are clipped to the unit box.
pub fn deepfool<T: Real>(
    net: &Network<T>,
    x: &[T],
    source_index: usize,
    eta: f64,
    iters: usize,
) -> Result<CraftedSample<T>> {
    let label_before = net.predict(x)?;
    let overshoot = T::of(1.0 + eta);
    let mut cur = x.to_vec();
    for _ in 0..iters {
        if net.predict(&cur)? != label_before {
            break;
        }
        let delta = deepfool_step(net, &cur)?;
        for (c, d) in cur.iter_mut().zip(delta) {
            *c = *c + overshoot * d;
        }
        clamp01(&mut cur);
    }
    finish(net, x, cur, source_index, label_before, None)
}

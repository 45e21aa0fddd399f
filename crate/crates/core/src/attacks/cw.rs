//! Optimization-based crafting: squared-L2 distance plus a hinge on the
//! pushed-down class, minimized by adaptive-moment descent under a tanh
//! change of variables that keeps iterates inside the unit box.

use super::{finish, CraftedSample};
use crate::error::{Error, Result};
use crate::net::{Network, ScalarHead};
use crate::num::Real;

/// Objective diagnostics of one C&W run.
#[derive(Clone, Copy, Debug)]
pub struct CwReport {
    pub initial_objective: f64,
    pub best_objective: f64,
    pub final_objective: f64,
}

/// Hinge `max(Z_t - max_{i != t} Z_i, -kappa)` and the runner-up index.
fn hinge<T: Real>(logits: &[T], t: usize, kappa: T) -> (T, usize) {
    let mut best_other = None;
    for (i, &z) in logits.iter().enumerate() {
        if i == t {
            continue;
        }
        match best_other {
            None => best_other = Some(i),
            Some(b) if z > logits[b] => best_other = Some(i),
            Some(_) => {}
        }
    }
    let other = best_other.expect("at least two classes");
    ((logits[t] - logits[other]).max(-kappa), other)
}

/// Untargeted C&W on the L2 objective, pushing down class `t` (the
/// substitute's label for the source sample). Returns the best-seen iterate
/// by objective value; best-seen is never worse than the initial objective.
#[allow(clippy::too_many_arguments)]
pub fn cw_l2<T: Real>(
    net: &Network<T>,
    x: &[T],
    source_index: usize,
    t: usize,
    c: f64,
    kappa: f64,
    iters: usize,
    step: f64,
) -> Result<(CraftedSample<T>, CwReport)> {
    if t >= net.n_classes() {
        return Err(Error::domain(format!("class {t} out of range")));
    }
    if iters == 0 {
        return Err(Error::usage("cw needs iters >= 1"));
    }
    let label_before = net.predict(x)?;
    let c = T::of(c);
    let kappa = T::of(kappa);
    let half = T::of(0.5);
    let one = T::one();
    let two = T::of(2.0);

    // tanh reparameterization; clamp the seed away from the open-interval
    // boundary so atanh stays finite.
    let margin = T::of(1e-6);
    let mut w: Vec<T> = x
        .iter()
        .map(|&v| {
            let v = v.max(margin).min(one - margin);
            (two * v - one).atanh()
        })
        .collect();

    let to_box = |w: &[T]| -> Vec<T> { w.iter().map(|&wi| (wi.tanh() + one) * half).collect() };

    let objective = |xp: &[T]| -> Result<(T, T, usize)> {
        let fwd = net.forward(xp)?;
        let dist: T = xp.iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let (h, other) = hinge(&fwd.logits, t, kappa);
        Ok((dist + c * h, h, other))
    };

    let x0 = to_box(&w);
    let (obj0, _, _) = objective(&x0)?;
    if !obj0.is_finite() {
        return Err(Error::Numerical(format!(
            "cw: non-finite objective at start (sample {source_index})"
        )));
    }
    let mut best_obj = obj0;
    let mut best_x = x0;
    let mut last_obj = obj0;

    // Adaptive-moment state over w.
    let (b1, b2, eps) = (T::of(0.9), T::of(0.999), T::of(1e-8));
    let lr = T::of(step);
    let mut m = vec![T::zero(); w.len()];
    let mut v = vec![T::zero(); w.len()];

    for it in 1..=iters {
        let xp = to_box(&w);
        let fwd = net.forward(&xp)?;
        let (h, other) = hinge(&fwd.logits, t, kappa);
        // d/dx of dist term is 2*delta; the hinge contributes only when
        // it is above its floor.
        let mut grad_x: Vec<T> = xp.iter().zip(x).map(|(&a, &b)| two * (a - b)).collect();
        if h > -kappa {
            let g = net.input_gradient_cached(
                &fwd,
                ScalarHead::LogitDiff { up: t, down: other },
            )?;
            for (gx, gi) in grad_x.iter_mut().zip(g) {
                *gx = *gx + c * gi;
            }
        }
        let corr1 = one - b1.powi(it as i32);
        let corr2 = one - b2.powi(it as i32);
        for i in 0..w.len() {
            let th = w[i].tanh();
            let gw = grad_x[i] * (one - th * th) * half;
            m[i] = b1 * m[i] + (one - b1) * gw;
            v[i] = b2 * v[i] + (one - b2) * gw * gw;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        let xp = to_box(&w);
        let (obj, _, _) = objective(&xp)?;
        if !obj.is_finite() {
            return Err(Error::Numerical(format!(
                "cw: non-finite objective at iteration {it} (sample {source_index}, best so far {})",
                best_obj.f64()
            )));
        }
        if obj < best_obj {
            best_obj = obj;
            best_x = xp;
        }
        last_obj = obj;
    }

    let report = CwReport {
        initial_objective: obj0.f64(),
        best_objective: best_obj.f64(),
        final_objective: last_obj.f64(),
    };
    let sample = finish(net, x, best_x, source_index, label_before, None)?;
    Ok((sample, report))
}

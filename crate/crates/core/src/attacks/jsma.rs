//! Saliency-map crafting: perturb the feature pair that most increases the
//! target class while suppressing the others.

use super::{clamp01, finish, CraftFlag, CraftedSample};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::num::{l2_norm, Real};

/// Adversarial saliency of each feature for pushing toward class `target`.
///
/// `jacobian` is the softmax-output Jacobian, one row per class. A feature
/// scores zero when the target derivative is negative or the other-class
/// derivative sum is positive; otherwise the product of the target derivative
/// and the magnitude of that sum.
pub fn saliency_map<T: Real>(jacobian: &[Vec<T>], target: usize) -> Vec<T> {
    let n = jacobian[target].len();
    let mut saliency = Vec::with_capacity(n);
    for i in 0..n {
        let toward_target = jacobian[target][i];
        let others: T = jacobian
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != target)
            .map(|(_, row)| row[i])
            .sum();
        let s = if toward_target < T::zero() || others > T::zero() {
            T::zero()
        } else {
            toward_target * others.abs()
        };
        saliency.push(s);
    }
    saliency
}

/// Feature pair maximizing the saliency sum over still-available features;
/// lexicographically smallest pair on ties. `None` when fewer than two
/// features remain or no pair has a positive sum.
pub fn select_feature_pair<T: Real>(saliency: &[T], available: &[bool]) -> Option<(usize, usize)> {
    let mut first: Option<usize> = None;
    let mut second: Option<usize> = None;
    for i in 0..saliency.len() {
        if !available[i] {
            continue;
        }
        match first {
            None => first = Some(i),
            Some(f) if saliency[i] > saliency[f] => {
                second = first;
                first = Some(i);
            }
            Some(_) => match second {
                None => second = Some(i),
                Some(s) if saliency[i] > saliency[s] => second = Some(i),
                Some(_) => {}
            },
        }
    }
    let (f, s) = (first?, second?);
    if saliency[f] + saliency[s] > T::zero() {
        Some((f.min(s), f.max(s)))
    } else {
        None
    }
}

/// Crafts toward `target` by repeatedly bumping the best feature pair by
/// `theta`, until the substitute predicts the target, saliency dies out, the
/// feature budget is consumed, or the optional L2 cap would be exceeded.
#[allow(clippy::too_many_arguments)]
pub fn jsma<T: Real>(
    net: &Network<T>,
    x: &[T],
    source_index: usize,
    target: usize,
    theta: f64,
    max_features: usize,
    l2_cap: Option<f64>,
) -> Result<CraftedSample<T>> {
    if target >= net.n_classes() {
        return Err(Error::domain(format!(
            "target class {target} out of range"
        )));
    }
    if max_features > x.len() {
        return Err(Error::usage(format!(
            "max_features {max_features} exceeds input dimension {}",
            x.len()
        )));
    }
    let label_before = net.predict(x)?;
    if target == label_before {
        return Err(Error::usage(
            "jsma target equals the current substitute label",
        ));
    }
    let theta = T::of(theta);
    let mut cur = x.to_vec();
    let mut available = vec![true; x.len()];
    let mut used = 0usize;
    let mut perturbed = false;
    loop {
        if net.predict(&cur)? == target || used + 2 > max_features {
            break;
        }
        let jacobian = net.prob_jacobian(&cur)?;
        let saliency = saliency_map(&jacobian, target);
        let Some((i, j)) = select_feature_pair(&saliency, &available) else {
            if !perturbed {
                return finish(
                    net,
                    x,
                    cur,
                    source_index,
                    label_before,
                    Some(CraftFlag::NoSaliencyPair),
                );
            }
            break;
        };
        let mut candidate = cur.clone();
        candidate[i] = candidate[i] + theta;
        candidate[j] = candidate[j] + theta;
        clamp01(&mut candidate);
        if let Some(cap) = l2_cap {
            let delta: Vec<T> = candidate.iter().zip(x).map(|(&a, &b)| a - b).collect();
            if l2_norm(&delta) > T::of(cap) {
                break;
            }
        }
        cur = candidate;
        available[i] = false;
        available[j] = false;
        used += 2;
        perturbed = true;
    }
    finish(net, x, cur, source_index, label_before, None)
}

//! The two run-level evaluation quantities.
//!
//! `Acc` is the oracle's accuracy on transfer-attacked inputs (lower is a
//! stronger attack); `Simi` is the substitute/oracle agreement rate. Both go
//! through [`Oracle::metric_query`], so neither spends attack-ledger queries.

use rayon::prelude::*;

use crate::attacks::fgsm;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::num::Real;
use crate::oracle::Oracle;

/// Fraction of inputs where the substitute's argmax matches the oracle label.
pub fn simi_metric<T: Real>(
    net: &Network<T>,
    oracle: &Oracle<T>,
    inputs: &[Vec<T>],
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::usage("simi needs a nonempty dataset"));
    }
    let oracle_labels = oracle.metric_query(inputs)?;
    let mine: Vec<usize> = inputs
        .par_iter()
        .map(|x| net.predict(x))
        .collect::<Result<_>>()?;
    let agree = mine
        .iter()
        .zip(&oracle_labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(agree as f64 / inputs.len() as f64)
}

/// Oracle accuracy under transfer attack: craft a fast-gradient-sign sample
/// on the substitute for every eval input, then measure how often the oracle
/// still answers its own clean label. Lower means more transferable attacks.
pub fn acc_metric<T: Real>(
    net: &Network<T>,
    oracle: &Oracle<T>,
    eval_inputs: &[Vec<T>],
    lambda: f64,
) -> Result<f64> {
    let clean = oracle.metric_query(eval_inputs)?;
    acc_against(net, oracle, eval_inputs, &clean, lambda)
}

/// Ground-truth variant: accuracy measured against supplied reference labels
/// instead of the oracle's own clean predictions.
pub fn acc_metric_vs_labels<T: Real>(
    net: &Network<T>,
    oracle: &Oracle<T>,
    eval_inputs: &[Vec<T>],
    reference: &[usize],
    lambda: f64,
) -> Result<f64> {
    if reference.len() != eval_inputs.len() {
        return Err(Error::usage("reference label count mismatch"));
    }
    acc_against(net, oracle, eval_inputs, reference, lambda)
}

fn acc_against<T: Real>(
    net: &Network<T>,
    oracle: &Oracle<T>,
    eval_inputs: &[Vec<T>],
    reference: &[usize],
    lambda: f64,
) -> Result<f64> {
    if eval_inputs.is_empty() {
        return Err(Error::usage("acc needs a nonempty eval set"));
    }
    if lambda <= 0.0 {
        return Err(Error::usage("eval perturbation magnitude must be > 0"));
    }
    let adversarial: Vec<Vec<T>> = eval_inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| fgsm(net, x, i, lambda).map(|s| s.x_adv))
        .collect::<Result<_>>()?;
    let attacked = oracle.metric_query(&adversarial)?;
    let held = attacked
        .iter()
        .zip(reference)
        .filter(|(a, r)| a == r)
        .count();
    Ok(held as f64 / eval_inputs.len() as f64)
}

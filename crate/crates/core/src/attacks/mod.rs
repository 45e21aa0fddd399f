//! Candidate-query crafting: six white-box methods that push a sample toward
//! or across the substitute's decision boundary.
//!
//! Each method maps (substitute, source sample) to a perturbed sample clipped
//! to `[0,1]^n`. Degenerate cases (zero gradients, no usable saliency pair,
//! numeric failures) flag the sample instead of aborting a whole pool.

mod cw;
mod deepfool;
mod gradient;
mod jsma;

pub use cw::{cw_l2, CwReport};
pub use deepfool::{deepfool, deepfool_step};
pub use gradient::{fgsm, fgsm_step, fgv, igs};
pub use jsma::{jsma, saliency_map, select_feature_pair};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::num::{l2_norm, linf_norm, top2, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Igs,
    Fgv,
    Jsma,
    Deepfool,
    Cw,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Igs => "igs",
            AttackMethod::Fgv => "fgv",
            AttackMethod::Jsma => "jsma",
            AttackMethod::Deepfool => "deepfool",
            AttackMethod::Cw => "cw",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fgsm" => Ok(AttackMethod::Fgsm),
            "igs" => Ok(AttackMethod::Igs),
            "fgv" => Ok(AttackMethod::Fgv),
            "jsma" => Ok(AttackMethod::Jsma),
            "deepfool" => Ok(AttackMethod::Deepfool),
            "cw" => Ok(AttackMethod::Cw),
            other => Err(Error::usage(format!("unknown attack method `{other}`"))),
        }
    }
}

impl std::fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the iterative-gradient-sign step size is expressed: a step count
/// (per-step size ε/n) or an explicit per-step size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IgsAlpha {
    Steps(usize),
    StepSize(f64),
}

/// Hyperparameters for all crafting methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// FGSM/FGV perturbation magnitude.
    pub lambda: f64,
    /// IGS L-infinity ball radius.
    pub epsilon: f64,
    pub igs_alpha: IgsAlpha,
    /// Per-sample iteration cap (IGS with an explicit step size, DeepFool,
    /// C&W descent steps).
    pub iters: usize,
    /// C&W hinge confidence.
    pub kappa: f64,
    /// C&W distance/hinge tradeoff weight.
    pub c: f64,
    /// C&W descent step size.
    pub cw_step: f64,
    /// JSMA per-feature offset.
    pub theta: f64,
    /// JSMA feature budget (two consumed per perturbation step).
    pub max_features: usize,
    /// DeepFool overshoot.
    pub eta: f64,
    /// Optional L2 cap on the total JSMA perturbation.
    pub jsma_l2_cap: Option<f64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            method: AttackMethod::Fgsm,
            lambda: 0.2,
            epsilon: 0.2,
            igs_alpha: IgsAlpha::Steps(10),
            iters: 100,
            kappa: 0.0,
            c: 1.0,
            cw_step: 0.005,
            theta: 0.1,
            max_features: 20,
            eta: 0.02,
            jsma_l2_cap: None,
        }
    }
}

impl AttackConfig {
    pub fn with_method(method: AttackMethod) -> Self {
        AttackConfig {
            method,
            ..AttackConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::usage("lambda must be > 0"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::usage("epsilon must be > 0"));
        }
        if self.iters == 0 {
            return Err(Error::usage("iters must be >= 1"));
        }
        if self.kappa < 0.0 {
            return Err(Error::usage("kappa must be >= 0"));
        }
        if self.c <= 0.0 {
            return Err(Error::usage("c must be > 0"));
        }
        if self.cw_step <= 0.0 {
            return Err(Error::usage("cw step must be > 0"));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::usage("theta must be in (0, 1]"));
        }
        if self.max_features < 2 {
            return Err(Error::usage("max_features must be >= 2"));
        }
        if self.eta < 0.0 {
            return Err(Error::usage("eta must be >= 0"));
        }
        match self.igs_alpha {
            IgsAlpha::Steps(0) => return Err(Error::usage("alpha step count must be >= 1")),
            IgsAlpha::StepSize(s) if s <= 0.0 => {
                return Err(Error::usage("alpha step size must be > 0"))
            }
            _ => {}
        }
        if let Some(cap) = self.jsma_l2_cap {
            if cap <= 0.0 {
                return Err(Error::usage("jsma l2 cap must be > 0"));
            }
        }
        Ok(())
    }
}

/// Why a crafted sample came back unperturbed or short.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CraftFlag {
    /// The gradient vanished; the sample is the unmodified source.
    ZeroGradient,
    /// JSMA found no feature pair with positive saliency at the first step.
    NoSaliencyPair,
    /// The per-sample routine hit a numeric failure; source returned as-is.
    NumericalFailure,
}

/// One crafted candidate, tagged with its provenance and perturbation norms.
#[derive(Clone, Debug)]
pub struct CraftedSample<T> {
    pub x_adv: Vec<T>,
    /// Index into the source set the sample was crafted from.
    pub source_index: usize,
    pub l2: T,
    pub linf: T,
    /// Substitute label of the source sample.
    pub label_before: usize,
    /// Substitute label of the crafted sample.
    pub label_after: usize,
    pub flag: Option<CraftFlag>,
}

impl<T: Real> CraftedSample<T> {
    pub fn flipped(&self) -> bool {
        self.label_before != self.label_after
    }
}

/// The crafted set for one iteration, ordered by source index.
#[derive(Clone, Debug)]
pub struct CandidatePool<T> {
    pub samples: Vec<CraftedSample<T>>,
}

impl<T: Real> CandidatePool<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn flagged(&self) -> usize {
        self.samples.iter().filter(|s| s.flag.is_some()).count()
    }

    /// Fraction of samples whose substitute label changed.
    pub fn flip_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.flipped()).count() as f64 / self.samples.len() as f64
    }
}

pub(crate) fn clamp01<T: Real>(v: &mut [T]) {
    for x in v {
        *x = x.max(T::zero()).min(T::one());
    }
}

/// Assembles a crafted sample, recomputing norms and the post-perturbation
/// substitute label.
pub(crate) fn finish<T: Real>(
    net: &Network<T>,
    source: &[T],
    x_adv: Vec<T>,
    source_index: usize,
    label_before: usize,
    flag: Option<CraftFlag>,
) -> Result<CraftedSample<T>> {
    let label_after = net.predict(&x_adv)?;
    let delta: Vec<T> = x_adv.iter().zip(source).map(|(&a, &s)| a - s).collect();
    Ok(CraftedSample {
        l2: l2_norm(&delta),
        linf: linf_norm(&delta),
        x_adv,
        source_index,
        label_before,
        label_after,
        flag,
    })
}

/// Crafts one candidate per source sample. Per-sample numeric failures are
/// flagged, not fatal; the pool always has `sources.len()` entries.
pub fn craft_pool<T: Real>(
    net: &Network<T>,
    sources: &[Vec<T>],
    cfg: &AttackConfig,
) -> Result<CandidatePool<T>> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::usage("cannot craft from an empty source set"));
    }
    let samples: Result<Vec<CraftedSample<T>>> = sources
        .par_iter()
        .enumerate()
        .map(|(i, x)| craft_one(net, x, i, cfg))
        .collect();
    Ok(CandidatePool { samples: samples? })
}

fn craft_one<T: Real>(
    net: &Network<T>,
    x: &[T],
    index: usize,
    cfg: &AttackConfig,
) -> Result<CraftedSample<T>> {
    let crafted = match cfg.method {
        AttackMethod::Fgsm => fgsm(net, x, index, cfg.lambda),
        AttackMethod::Igs => igs(net, x, index, cfg.epsilon, cfg.igs_alpha, cfg.iters),
        AttackMethod::Fgv => fgv(net, x, index, cfg.lambda),
        AttackMethod::Jsma => {
            let probs = net.probs(x)?;
            let (_, runner_up) = top2(&probs);
            // Pool crafting adapts the feature budget to the input width.
            let budget = cfg.max_features.min(x.len());
            jsma(net, x, index, runner_up, cfg.theta, budget, cfg.jsma_l2_cap)
        }
        AttackMethod::Deepfool => deepfool(net, x, index, cfg.eta, cfg.iters),
        AttackMethod::Cw => {
            let label = net.predict(x)?;
            cw_l2(net, x, index, label, cfg.c, cfg.kappa, cfg.iters, cfg.cw_step)
                .map(|(sample, _)| sample)
        }
    };
    match crafted {
        Ok(sample) => Ok(sample),
        // Degenerate per-sample numerics flag the entry instead of killing
        // the pool.
        Err(Error::Numerical(_)) => {
            let label = net.predict(x)?;
            finish(
                net,
                x,
                x.to_vec(),
                index,
                label,
                Some(CraftFlag::NumericalFailure),
            )
        }
        Err(e) => Err(e),
    }
}

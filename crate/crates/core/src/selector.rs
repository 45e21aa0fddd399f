//! Pool-based active selection of query candidates.
//!
//! Scores come from the substitute only — selection happens before the oracle
//! is queried, so no oracle handle ever reaches these functions. The three
//! base strategies (random, max-entropy, margin) can each be fused with a
//! diversity criterion by summing ordinal ranks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::CandidatePool;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "rs")]
    Random,
    #[serde(rename = "me")]
    MaxEntropy,
    #[serde(rename = "mb")]
    Margin,
    #[serde(rename = "rs_div")]
    RandomDiversity,
    #[serde(rename = "me_div")]
    MaxEntropyDiversity,
    #[serde(rename = "mb_div")]
    MarginDiversity,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::MaxEntropy,
        Strategy::Margin,
        Strategy::RandomDiversity,
        Strategy::MaxEntropyDiversity,
        Strategy::MarginDiversity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "rs",
            Strategy::MaxEntropy => "me",
            Strategy::Margin => "mb",
            Strategy::RandomDiversity => "rs_div",
            Strategy::MaxEntropyDiversity => "me_div",
            Strategy::MarginDiversity => "mb_div",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "rs" => Ok(Strategy::Random),
            "me" => Ok(Strategy::MaxEntropy),
            "mb" => Ok(Strategy::Margin),
            "rs_div" => Ok(Strategy::RandomDiversity),
            "me_div" => Ok(Strategy::MaxEntropyDiversity),
            "mb_div" => Ok(Strategy::MarginDiversity),
            other => Err(Error::usage(format!("unknown strategy `{other}`"))),
        }
    }

    fn needs_entropy(self) -> bool {
        matches!(self, Strategy::MaxEntropy | Strategy::MaxEntropyDiversity)
    }

    fn needs_margin(self) -> bool {
        matches!(self, Strategy::Margin | Strategy::MarginDiversity)
    }

    fn needs_diversity(self) -> bool {
        matches!(
            self,
            Strategy::RandomDiversity | Strategy::MaxEntropyDiversity | Strategy::MarginDiversity
        )
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which candidates to spend queries on, and how many.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub strategy: Strategy,
    pub k: usize,
    /// Random-select seed; ignored by the deterministic strategies.
    pub seed: u64,
}

impl Default for SelectionPlan {
    fn default() -> Self {
        SelectionPlan {
            strategy: Strategy::Random,
            k: 10,
            seed: 0,
        }
    }
}

/// Predictive entropy (natural log); `0 * log 0` contributes nothing.
pub fn entropy<T: Real>(probs: &[T]) -> T {
    let mut h = T::zero();
    for &p in probs {
        if p > T::zero() {
            h = h - p * p.ln();
        }
    }
    h
}

/// Gap between the two largest probabilities.
pub fn margin<T: Real>(probs: &[T]) -> T {
    assert!(probs.len() >= 2, "margin needs at least two classes");
    let mut h1 = T::neg_infinity();
    let mut h2 = T::neg_infinity();
    for &p in probs {
        if p > h1 {
            h2 = h1;
            h1 = p;
        } else if p > h2 {
            h2 = p;
        }
    }
    h1 - h2
}

/// Minimum Euclidean distance from `x` to the labeled set, by full scan.
pub fn diversity_distance<T: Real>(x: &[T], base: &[Vec<T>]) -> Result<T> {
    if base.is_empty() {
        return Err(Error::usage("diversity distance against an empty set"));
    }
    let mut best = T::infinity();
    for b in base {
        let d: T = x
            .iter()
            .zip(b)
            .map(|(&a, &c)| (a - c) * (a - c))
            .sum::<T>()
            .sqrt();
        if d < best {
            best = d;
        }
    }
    Ok(best)
}

/// Ordinal descending ranks: rank 1 = largest value, ties broken by index.
pub fn rank_descending<T: PartialOrd>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores comparable")
            .then(a.cmp(&b))
    });
    invert(&order)
}

/// Ordinal ascending ranks: rank 1 = smallest value, ties broken by index.
pub fn rank_ascending<T: PartialOrd>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("scores comparable")
            .then(a.cmp(&b))
    });
    invert(&order)
}

fn invert(order: &[usize]) -> Vec<usize> {
    let mut ranks = vec![0; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Per-candidate scores actually computed during a selection, for audit.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CandidateScores {
    pub entropy: Option<f64>,
    pub margin: Option<f64>,
    pub diversity: Option<f64>,
}

/// Outcome of a selection: chosen pool indices in pool order, plus the
/// score table.
#[derive(Clone, Debug)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub scores: Vec<CandidateScores>,
}

/// Core selection rule on raw score vectors.
///
/// `n` is the pool size; score slices must match it when required by the
/// strategy. Returned indices are ascending (pool order).
pub fn select_from_scores<T: Real>(
    strategy: Strategy,
    n: usize,
    k: usize,
    seed: u64,
    entropies: Option<&[T]>,
    margins: Option<&[T]>,
    diversity: Option<&[T]>,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::usage("selection size k must be >= 1"));
    }
    if k > n {
        return Err(Error::usage(format!("k = {k} exceeds pool size {n}")));
    }
    fn need<'a, U>(n: usize, name: &str, s: Option<&'a [U]>) -> Result<&'a [U]> {
        let s = s.ok_or_else(|| Error::usage(format!("strategy requires {name} scores")))?;
        if s.len() != n {
            return Err(Error::usage(format!(
                "{name} scores have length {}, pool has {n}",
                s.len()
            )));
        }
        Ok(s)
    }
    let mut indices = match strategy {
        Strategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, n, k).into_vec()
        }
        Strategy::MaxEntropy => top_k_desc(need(n, "entropy", entropies)?, k),
        Strategy::Margin => bottom_k_asc(need(n, "margin", margins)?, k),
        Strategy::RandomDiversity => top_k_desc(need(n, "diversity", diversity)?, k),
        Strategy::MaxEntropyDiversity => {
            let h = need(n, "entropy", entropies)?;
            let d = need(n, "diversity", diversity)?;
            let sums = rank_sums(&rank_descending(h), &rank_descending(d));
            bottom_k_asc(&sums, k)
        }
        Strategy::MarginDiversity => {
            let m = need(n, "margin", margins)?;
            let d = need(n, "diversity", diversity)?;
            let sums = rank_sums(&rank_ascending(m), &rank_descending(d));
            bottom_k_asc(&sums, k)
        }
    };
    indices.sort_unstable();
    Ok(indices)
}

fn rank_sums(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// Indices of the k largest values, ties by lower index.
fn top_k_desc<T: PartialOrd>(scores: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores comparable")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Indices of the k smallest values, ties by lower index.
fn bottom_k_asc<T: PartialOrd>(scores: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("scores comparable")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Selects `plan.k` candidates from a crafted pool.
///
/// Scores are computed lazily: only what the strategy needs, each from the
/// substitute's own outputs or the distance to the current training set.
pub fn select<T: Real>(
    pool: &CandidatePool<T>,
    base: &[Vec<T>],
    net: &Network<T>,
    plan: &SelectionPlan,
) -> Result<Selection> {
    let n = pool.len();
    let strategy = plan.strategy;
    let probs: Option<Vec<Vec<T>>> = if strategy.needs_entropy() || strategy.needs_margin() {
        Some(
            pool.samples
                .par_iter()
                .map(|s| net.probs(&s.x_adv))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let entropies: Option<Vec<T>> = strategy
        .needs_entropy()
        .then(|| probs.as_ref().expect("probs computed").iter().map(|p| entropy(p)).collect());
    let margins: Option<Vec<T>> = strategy
        .needs_margin()
        .then(|| probs.as_ref().expect("probs computed").iter().map(|p| margin(p)).collect());
    let diversity: Option<Vec<T>> = if strategy.needs_diversity() {
        Some(
            pool.samples
                .par_iter()
                .map(|s| diversity_distance(&s.x_adv, base))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let indices = select_from_scores(
        strategy,
        n,
        plan.k,
        plan.seed,
        entropies.as_deref(),
        margins.as_deref(),
        diversity.as_deref(),
    )?;
    let scores: Vec<CandidateScores> = (0..n)
        .map(|i| CandidateScores {
            entropy: entropies.as_ref().map(|v| v[i].f64()),
            margin: margins.as_ref().map(|v| v[i].f64()),
            diversity: diversity.as_ref().map(|v| v[i].f64()),
        })
        .collect();
    if log::log_enabled!(log::Level::Debug) {
        for (i, s) in scores.iter().enumerate() {
            log::debug!(
                "candidate {i}: entropy={:?} margin={:?} diversity={:?} selected={}",
                s.entropy,
                s.margin,
                s.diversity,
                indices.binary_search(&i).is_ok()
            );
        }
    }
    Ok(Selection { indices, scores })
}

/// Single-pass uniform sample of `k` stream elements (algorithm R): every
/// element is retained with probability `k / N`. Streams shorter than `k`
/// come back whole.
pub fn reservoir_sample<I, U>(stream: I, k: usize, seed: u64) -> Vec<U>
where
    I: IntoIterator<Item = U>,
{
    if k == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir: Vec<U> = Vec::with_capacity(k);
    for (i, item) in stream.into_iter().enumerate() {
        if i < k {
            reservoir.push(item);
        } else {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            if j < k {
                reservoir[j] = item;
            }
        }
    }
    reservoir
}

//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`], so the same
//! code runs at `f32` or `f64`. Concrete aliases live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant not representable in scalar type")
    }

    /// Widens this scalar to `f64` (exact for `f32` and `f64`).
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sign with a hard zero: -1, 0, or +1.
///
/// `Float::signum` maps +0.0 to +1.0, which is wrong for perturbations that
/// must leave zero-gradient coordinates untouched.
pub fn sign0<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Euclidean norm of a vector.
pub fn l2_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Max-absolute-value norm of a vector.
pub fn linf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Index of the largest element, lowest index on ties. Empty slice yields 0.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Indices of the two largest elements (lowest index on ties).
///
/// Panics if `v` has fewer than two elements.
pub fn top2<T: Real>(v: &[T]) -> (usize, usize) {
    assert!(v.len() >= 2, "top2 needs at least two elements");
    let first = argmax(v);
    let mut second = if first == 0 { 1 } else { 0 };
    for (i, &x) in v.iter().enumerate() {
        if i != first && x > v[second] {
            second = i;
        }
    }
    (first, second)
}

/// Deterministic per-iteration seed derivation (splitmix64 over master ^ tag).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

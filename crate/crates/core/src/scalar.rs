//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the calibration routines are generic over.
///
/// Implemented for `f32` and `f64`. `f64` is the reference precision; the
/// `f32` instantiation widens the probability clamp to its own epsilon so
/// that `1 - eps` stays representable.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lower clamp applied to probabilities before taking logits or logs.
    fn prob_eps() -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn prob_eps() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    #[inline]
    fn prob_eps() -> Self {
        f32::EPSILON
    }
}

/// Clamp a probability into `[eps, 1 - eps]`.
#[inline]
pub fn clamp_prob<S: Scalar>(p: S) -> S {
    let eps = S::prob_eps();
    p.max(eps).min(S::one() - eps)
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus<S: Scalar>(x: S) -> S {
    x.max(S::zero()) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, evaluated on the branch that avoids overflow.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `log σ(x)`.
#[inline]
pub fn log_sigmoid<S: Scalar>(x: S) -> S {
    -softplus(-x)
}

/// Binary entropy in nats with `0·log 0 = 0`.
pub fn binary_entropy<S: Scalar>(p: S) -> S {
    let term = |q: S| if q > S::zero() { -q * q.ln() } else { S::zero() };
    term(p) + term(S::one() - p)
}

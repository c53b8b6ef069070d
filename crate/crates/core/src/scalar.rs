//! Scalar abstraction for the numeric core.
//!
//! All tree math is written against [`Scalar`] so the same code runs in f32
//! or f64. The crate-root type aliases pin f64, which is what the CLI and
//! the experiment harness use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar usable throughout the tree and attribution math.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cast an f64 constant into the working scalar type.
#[inline]
pub fn cast<S: Scalar>(v: f64) -> S {
    S::from(v).expect("f64 constant representable in scalar type")
}

/// Cast a usize count into the working scalar type.
#[inline]
pub fn cast_usize<S: Scalar>(n: usize) -> S {
    S::from(n).expect("usize count representable in scalar type")
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_closed_form() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(-1.0f64) - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((sigmoid(1.0f64) + sigmoid(-1.0f64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0f64), 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert!(sigmoid(-800.0f64).is_finite());
    }
}

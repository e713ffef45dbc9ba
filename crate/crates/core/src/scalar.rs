//! Scalar abstraction for the dense linear algebra.
//!
//! The factorizations only need field operations and an ordering, so they run
//! unchanged over `f32`, `f64` and exact rationals such as
//! `num_rational::BigRational`. Transcendental code (softmax, KL) additionally
//! requires [`num_traits::Float`].

use std::fmt::Debug;

use num_traits::{FromPrimitive, Signed, ToPrimitive};

/// An ordered field element usable by [`crate::Matrix`].
pub trait Scalar:
    Clone + PartialOrd + Debug + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts a tolerance or literal into the scalar type.
    ///
    /// Panics if `x` cannot be represented (non-finite input).
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal must be finite")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Clone + PartialOrd + Debug + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

pub(crate) fn max_of<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

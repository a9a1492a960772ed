//! Scalar abstraction for the probability arithmetic.
//!
//! The distribution and transition algebra is written once over [`Scalar`]
//! and instantiated with `f64`/`f32` for simulation work and with
//! arbitrary-precision rationals where exactness matters (the enumeration
//! oracle and algebraic identity checks).

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed};

/// Number type the core model is generic over.
pub trait Scalar: Num + Signed + FromPrimitive + Clone + PartialOrd + Debug + 'static {
    /// Absolute tolerance for "sums to one" simplex checks.
    /// Zero for exact types.
    fn simplex_tol() -> Self;

    /// Accumulated-drift guard for iterated evolution. Exceeding this is
    /// treated as an implementation bug, not a model state.
    fn drift_guard() -> Self;
}

impl Scalar for f64 {
    fn simplex_tol() -> Self {
        1e-12
    }

    fn drift_guard() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn simplex_tol() -> Self {
        1e-5
    }

    fn drift_guard() -> Self {
        1e-4
    }
}

impl Scalar for Ratio<BigInt> {
    fn simplex_tol() -> Self {
        Self::zero()
    }

    fn drift_guard() -> Self {
        Self::zero()
    }
}

use num_traits::Zero;

/// `|a - b| <= tol` with the scalar's own simplex tolerance.
pub fn within_simplex_tol<T: Scalar>(a: &T, b: &T) -> bool {
    (a.clone() - b.clone()).abs() <= T::simplex_tol()
}

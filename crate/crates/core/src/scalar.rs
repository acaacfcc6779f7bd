//! Scalar abstraction for the analytic formulas.
//!
//! Every closed-form probability in this crate is a ratio of small integer
//! polynomials, so the calculators are generic over the scalar type: `f64`
//! for everyday use and [`Exact`](crate::Exact) (arbitrary-precision
//! rationals) for the exact-arithmetic consistency tests.

use std::fmt::Debug;

use num::{FromPrimitive, Num};

/// Field-like scalar with exact construction from integer counts.
///
/// Implemented by `f64`, `f32`, and `num::BigRational` among others.
pub trait Scalar: Num + FromPrimitive + PartialOrd + Clone + Debug {
    /// Converts an integer count. Panics only if the scalar cannot hold it.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    /// Exact ratio of two integer counts.
    fn ratio(num: u64, den: u64) -> Self {
        assert!(den != 0, "ratio denominator must be nonzero");
        Self::from_count(num) / Self::from_count(den)
    }

    /// Integer power by repeated squaring (exact for rational scalars).
    fn powu(&self, mut exp: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base.clone();
            }
            exp >>= 1;
            if exp > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

impl<T: Num + FromPrimitive + PartialOrd + Clone + Debug> Scalar for T {}

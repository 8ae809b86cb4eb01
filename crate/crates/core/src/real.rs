//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
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
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + 'static
{
    /// Converts an `f64` literal. Every value used in this crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    /// Tolerance floor for this precision: `max(requested, 64 * epsilon)`.
    #[inline]
    fn tol(requested: f64) -> Self {
        Self::lit(requested).max(Self::epsilon() * Self::lit(64.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log(cosh(x))` without overflow.
#[inline]
pub fn log_cosh<T: Real>(x: T) -> T {
    let a = x.abs();
    a + (-(a + a)).exp().ln_1p() - T::LN_2()
}

/// `sech(x)^2 = 1 - tanh(x)^2`, evaluated without cancellation for large |x|.
#[inline]
pub fn sech2<T: Real>(x: T) -> T {
    let a = x.abs();
    if a > T::lit(20.0) {
        let e = (-(a + a)).exp();
        T::lit(4.0) * e / ((T::one() + e) * (T::one() + e))
    } else {
        let c = x.cosh();
        T::one() / (c * c)
    }
}

/// Logistic function `1 / (1 + exp(-x))`.
#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cosh_matches_direct_formula() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.1, 2.0, 10.0] {
            assert!((log_cosh(x) - x.cosh().ln()).abs() < 1e-14);
        }
        // Direct formula overflows here.
        assert!((log_cosh(1000.0f64) - (1000.0 - 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn sech2_and_logistic() {
        assert_eq!(sech2(0.0f64), 1.0);
        assert!((sech2(0.5f64) - (1.0 - 0.5f64.tanh().powi(2))).abs() < 1e-15);
        assert!(sech2(400.0f64) >= 0.0);
        assert!((logistic(0.0f64) - 0.5).abs() < 1e-16);
        assert!((logistic(-800.0f64)).abs() < 1e-300);
        assert!((logistic(2.0f32) - 0.880797).abs() < 1e-6);
    }
}

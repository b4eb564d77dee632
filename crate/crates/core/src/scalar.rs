//! Scalar abstraction: the numeric core is generic over `f32`/`f64`.
//!
//! Training normally runs at `f32`; gradient checking and the oracle tests
//! instantiate the same code at `f64`.

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar for all embedding math.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + std::iter::Sum + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64` (used for constants and RNG draws).
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    /// Lossy conversion to `f64` (used for reporting and serialization).
    fn to_f64_lossy(self) -> f64;

    /// Lossy conversion to `f32` (checkpoint tables are stored as f32).
    fn to_f32_lossy(self) -> f32 {
        self.to_f64_lossy() as f32
    }

    fn from_f32_lossy(x: f32) -> Self {
        Self::from_f64_lossy(x as f64)
    }

    fn from_usize_lossy(x: usize) -> Self {
        Self::from_f64_lossy(x as f64)
    }
}

impl Scalar for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Default training precision.
pub type Real = f32;

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<S: Scalar>(x: S) -> S {
    let zero = S::zero();
    if x > zero {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    let one = S::one();
    if x >= S::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_direct_eval() {
        // ln(1 + e^0) = ln 2
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        // large positive argument: softplus(x) -> x
        assert!((softplus(40.0f64) - 40.0).abs() < 1e-12);
        // large negative argument stays finite and tiny
        let v = softplus(-20.0f64);
        assert!(v > 0.0 && v < 3e-9);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!(sigmoid(-100.0f32) >= 0.0);
        assert!(sigmoid(100.0f32) <= 1.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}

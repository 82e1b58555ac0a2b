//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All closed-form evaluators are written against [`Real`]; `f64` is the
//! working precision used by the recursions, Monte Carlo estimators and the
//! harness, while `f32` is accepted wherever the tolerances allow it.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
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

    /// `ln Γ(self)`, evaluated in double precision.
    fn ln_gamma(self) -> Self {
        Self::lit(statrs::function::gamma::ln_gamma(self.as_f64()))
    }

    /// `Γ(self)`, evaluated in double precision.
    fn gamma(self) -> Self {
        Self::lit(statrs::function::gamma::gamma(self.as_f64()))
    }

    /// Complementary error function, evaluated in double precision.
    fn erfc(self) -> Self {
        Self::lit(statrs::function::erf::erfc(self.as_f64()))
    }

    /// `ln B(a, b)`.
    fn ln_beta(self, b: Self) -> Self {
        self.ln_gamma() + b.ln_gamma() - (self + b).ln_gamma()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip() {
        assert_eq!(<f64 as Real>::lit(0.25), 0.25);
        assert_eq!(<f32 as Real>::lit(0.25), 0.25f32);
    }

    #[test]
    fn ln_beta_half_half_is_ln_pi() {
        let v = 0.5f64.ln_beta(0.5);
        assert!((v - std::f64::consts::PI.ln()).abs() < 1e-13);
    }
}

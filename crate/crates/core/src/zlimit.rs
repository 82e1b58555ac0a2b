//! The self-similar limit process `Z` of `R_{⌊nt⌋}/n` with index `c ∈ (0, 1)`.
//!
//! Kernel: `P_x((x−t)⁺ ≤ Z_t ≤ y) = (y/(y+t))^c`, with an atom of mass
//! `((x−t)/x)^c` at `x − t` when `t < x`. The hitting time of zero from `z`
//! satisfies `P_z(T₀ > t) = I_{z/t}(1−c, c)`, i.e. `z/T₀ ~ Beta(1−c, c)`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_r::kappa;
use crate::quadrature::{integrate, QuadOptions};
use crate::rng::{exponential, open_unit};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZParams<T> {
    c: T,
}

impl<T: Real> ZParams<T> {
    pub fn new(c: T) -> Result<Self> {
        if !(c > T::zero() && c < T::one()) {
            return Err(Error::InvalidParameter(format!("index c must lie in (0, 1), got {c}")));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> T {
        self.c
    }

    /// `B(c, 1−c) = π / sin(πc)`.
    pub fn beta_c(&self) -> T {
        T::PI() / (T::PI() * self.c).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialFnAccuracy<T> {
    pub abs_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SpecialFnAccuracy<T> {
    fn default() -> Self {
        Self { abs_tol: T::lit(1e-12), max_iter: 10_000 }
    }
}

impl<T: Real> SpecialFnAccuracy<T> {
    fn check(&self) -> Result<()> {
        if self.abs_tol > T::zero() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("abs_tol must be positive, got {}", self.abs_tol)))
        }
    }
}

/// Regularized incomplete beta `I_x(a, b)`.
///
/// Modified Lentz evaluation of the standard continued fraction, applied
/// directly for `x < a/(a+b)` and through `1 − I_{1−x}(b, a)` otherwise.
pub fn reg_inc_beta<T: Real>(x: T, a: T, b: T, acc: &SpecialFnAccuracy<T>) -> Result<T> {
    acc.check()?;
    if !(a > T::zero() && b > T::zero()) {
        return Err(Error::Domain(format!("beta parameters must be positive, got ({a}, {b})")));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::Domain(format!("incomplete beta argument {x} outside [0, 1]")));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    if x < a / (a + b) {
        beta_series(x, a, b, acc)
    } else {
        Ok(T::one() - beta_series(T::one() - x, b, a, acc)?)
    }
}

fn beta_series<T: Real>(x: T, a: T, b: T, acc: &SpecialFnAccuracy<T>) -> Result<T> {
    let ln_front = a * x.ln() + b * (-x).ln_1p() - a.ln_beta(b);
    let front = ln_front.exp() / a;
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    let one = T::one();
    let clamp = |v: T| if v.abs() < tiny { tiny } else { v };

    let mut c = one;
    let mut d = one / clamp(one - (a + b) * x / (a + one));
    let mut f = d;
    // Relative convergence at machine precision; `front · f ≤ 1` keeps the
    // absolute error well inside `abs_tol`.
    let eps = T::epsilon();
    for m in 1..=acc.max_iter {
        let m = T::from_usize_lossy(m);
        let two_m = m + m;
        let even = m * (b - m) * x / ((a + two_m - one) * (a + two_m));
        d = one / clamp(one + even * d);
        c = clamp(one + even / c);
        f = f * d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + two_m) * (a + two_m + one));
        d = one / clamp(one + odd * d);
        c = clamp(one + odd / c);
        let delta = d * c;
        f = f * delta;
        if (delta - one).abs() <= eps {
            return Ok(front * f);
        }
    }
    Err(Error::NonConvergence(format!(
        "incomplete beta I_{x}({a}, {b}) after {} iterations",
        acc.max_iter
    )))
}

/// `P_x(Z_t ≤ y)`.
pub fn z_transition_cdf<T: Real>(params: &ZParams<T>, x: T, t: T, y: T) -> T {
    let floor = (x - t).max(T::zero());
    if y < floor {
        return T::zero();
    }
    if y.is_infinite() {
        return T::one();
    }
    (y / (y + t)).powf(params.c)
}

/// Left limit `P_x(Z_t < y)`; differs from the CDF only at the atom `x − t`.
pub fn z_transition_cdf_left<T: Real>(params: &ZParams<T>, x: T, t: T, y: T) -> T {
    let floor = (x - t).max(T::zero());
    if y <= floor {
        return T::zero();
    }
    z_transition_cdf(params, x, t, y)
}

/// Inverse-CDF draw of `Z_t` under `P_x` from the uniform `u`.
pub fn z_step_sample<T: Real>(params: &ZParams<T>, x: T, t: T, u: T) -> T {
    if t < x && u <= ((x - t) / x).powf(params.c) {
        return x - t;
    }
    let s = u.powf(T::one() / params.c);
    t * s / (T::one() - s)
}

/// `P_z(T₀ > t)`.
pub fn t0_tail<T: Real>(params: &ZParams<T>, z: T, t: T, acc: &SpecialFnAccuracy<T>) -> Result<T> {
    if !(z > T::zero() && t > T::zero()) {
        return Err(Error::Domain(format!("t0_tail needs z, t > 0, got ({z}, {t})")));
    }
    if t <= z {
        return Ok(T::one());
    }
    reg_inc_beta(z / t, T::one() - params.c, params.c, acc)
}

/// Small-start form `z^{1−c} t^{c−1} / ((1−c) B(c, 1−c))` of [`t0_tail`].
pub fn t0_tail_small_start<T: Real>(params: &ZParams<T>, z: T, t: T) -> T {
    let c = params.c;
    kappa(c).expect("c validated") * z.powf(T::one() - c) * t.powf(c - T::one())
}

/// Quantile of `Beta(1−c, c)`: solves `I_b(1−c, c) = u` by Newton steps
/// safeguarded with bisection.
pub fn beta_quantile<T: Real>(params: &ZParams<T>, u: T, acc: &SpecialFnAccuracy<T>) -> Result<T> {
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::Domain(format!("uniform must lie in (0, 1), got {u}")));
    }
    let (a, b) = (T::one() - params.c, params.c);
    let ln_beta = a.ln_beta(b);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x = T::lit(0.5);
    let x_tol = T::lit(4.0) * T::epsilon();
    for _ in 0..acc.max_iter.max(200) {
        let f = reg_inc_beta(x, a, b, acc)? - u;
        if f == T::zero() {
            return Ok(x);
        }
        if f < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((a - T::one()) * x.ln() + (b - T::one()) * (-x).ln_1p() - ln_beta).exp();
        let newton = x - f / density;
        let next = if newton > lo && newton < hi && density.is_finite() {
            newton
        } else {
            T::lit(0.5) * (lo + hi)
        };
        if (next - x).abs() <= x_tol * next.max(T::min_positive_value()) || hi - lo <= x_tol * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence(format!("beta quantile at u = {u}")))
}

/// `T₀` from `z` via the uniform `u`: `z / B` with `B` the `Beta(1−c, c)`
/// quantile at `u`.
pub fn t0_from_uniform<T: Real>(params: &ZParams<T>, z: T, u: T, acc: &SpecialFnAccuracy<T>) -> Result<T> {
    Ok(z / beta_quantile(params, u, acc)?)
}

pub fn sample_t0<T: Real, R: RngCore + ?Sized>(params: &ZParams<T>, z: T, rng: &mut R) -> Result<T> {
    if !(z > T::zero()) {
        return Err(Error::Domain(format!("start must be positive, got {z}")));
    }
    t0_from_uniform(params, z, T::lit(open_unit(rng)), &SpecialFnAccuracy::default())
}

/// `I = ∫_0^∞ e^{ζ_t − t} dt` for a compound Poisson `ζ` with rate `c` and
/// `Exp(1)` jumps.
///
/// Between jumps the integrand is `e^{L − s}`, contributing `e^L(1 − e^{−τ})`
/// over a gap `τ`. Once `e^L < trunc_tol · I` the jump-free continuation `e^L`
/// is added and the draw returned. Since a segment plus anything from level
/// `L − τ + J ≥ L − τ` onwards is at least `e^L`, every draw is `≥ 1`.
pub fn sample_exp_functional<T: Real, R: RngCore + ?Sized>(params: &ZParams<T>, rng: &mut R, trunc_tol: T) -> T {
    T::lit(exp_functional(params.c.as_f64(), rng, trunc_tol.as_f64()))
}

/// Rate-generic core of [`sample_exp_functional`]; `rate = 0` gives `1`.
pub fn exp_functional<R: RngCore + ?Sized>(rate: f64, rng: &mut R, trunc_tol: f64) -> f64 {
    let mut total = 0.0;
    let mut level = 0.0f64;
    loop {
        let gap = exponential(rng, rate);
        let scale = level.exp();
        total += scale * -(-gap).exp_m1();
        if gap.is_infinite() {
            return total;
        }
        level = level - gap + exponential(rng, 1.0);
        let rest = level.exp();
        if rest < trunc_tol * total {
            return total + rest;
        }
    }
}

/// Residual of `E_x[Z_t^{1−c}; T₀ > t] = x^{1−c}`, written through the
/// first-passage density as
/// `|max(t,x)^{1−c} − ∫_x^t (t−s)^{1−c} f_{T₀}(s) ds − x^{1−c}|`.
///
/// With `s = x + (t−x) w^{1/c}` the endpoint singularity of the density cancels
/// and the integral becomes `x^{1−c}(t−x)^c/(c B) ∫_0^1 (t−s)^{1−c}/s dw`.
pub fn harmonic_identity_residual<T: Real>(params: &ZParams<T>, x: T, t: T, acc: &SpecialFnAccuracy<T>) -> Result<T> {
    acc.check()?;
    if !(x > T::zero() && t > T::zero()) {
        return Err(Error::Domain(format!("need x, t > 0, got ({x}, {t})")));
    }
    let c = params.c;
    let one_c = T::one() - c;
    if t <= x {
        return Ok(T::zero());
    }
    let span = t - x;
    let integrand = |w: T| {
        let s = x + span * w.powf(T::one() / c);
        (t - s).max(T::zero()).powf(one_c) / s
    };
    let opts = QuadOptions::new(acc.abs_tol * T::lit(1e-2), T::lit(1e-12));
    let body = integrate(integrand, T::zero(), T::one(), &opts)?.value;
    let integral = x.powf(one_c) * span.powf(c) / (c * params.beta_c()) * body;
    Ok((t.powf(one_c) - integral - x.powf(one_c)).abs())
}

/// `lim_{x→0} P_x(Z_t ≤ y | T₀ > t) = y/(y+t)`.
pub fn cond_limit_marginal_cdf<T: Real>(t: T, y: T) -> T {
    if y <= T::zero() {
        return T::zero();
    }
    if y.is_infinite() {
        return T::one();
    }
    y / (y + t)
}

/// CDF of `Z₁` under the Doob transform by `z^{1−c}`, whose density is
/// `κ(c) z^{1−c}/(1+z)²`.
///
/// On `[0, min(y,1)]` the substitution `z = r^{1/(2−c)}` and on `[1, y]` the
/// substitution `z = r^{−1/c}` both make the integrand bounded and smooth.
pub fn hat_marginal_cdf<T: Real>(params: &ZParams<T>, y: T, acc: &SpecialFnAccuracy<T>) -> Result<T> {
    acc.check()?;
    if !(y >= T::zero()) {
        return Err(Error::Domain(format!("hat marginal needs y ≥ 0, got {y}")));
    }
    let c = params.c;
    let two_c = T::lit(2.0) - c;
    let opts = QuadOptions::new(acc.abs_tol * T::lit(1e-2), T::lit(1e-13));
    let low_end = y.min(T::one()).powf(two_c);
    let low = integrate(
        |r: T| {
            let z = r.powf(T::one() / two_c);
            T::one() / (two_c * (T::one() + z) * (T::one() + z))
        },
        T::zero(),
        low_end,
        &opts,
    )?
    .value;
    let high = if y > T::one() {
        let r_lo = if y.is_infinite() { T::zero() } else { y.recip().powf(c) };
        integrate(
            |r: T| {
                let s = r.powf(T::one() / c);
                T::one() / (c * (T::one() + s) * (T::one() + s))
            },
            r_lo,
            T::one(),
            &opts,
        )?
        .value
    } else {
        T::zero()
    };
    Ok(kappa(c)? * (low + high))
}

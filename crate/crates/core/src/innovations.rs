//! Innovation laws for η (equivalently ξ = A^η).
//!
//! Every family is supported on `[0, ∞)`. Tails, CDFs and quantiles are
//! closed form except for the log-normal quantile (bisection) and the
//! discrete family (table walk).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::rng::open_unit;
use crate::scalar::Real;

/// Absolute tolerance of the numeric quantile inversion.
pub const QUANTILE_TOL: f64 = 1e-12;

/// Tolerance on the probability mass of a loaded discrete law.
pub const DISCRETE_SUM_TOL: f64 = 1e-12;

/// Recurrence class of the chains driven by a given innovation law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainClassification {
    PositiveRecurrent,
    NullRecurrent,
    Transient,
    CriticalUnresolved,
}

impl ChainClassification {
    pub fn label(self) -> &'static str {
        match self {
            Self::PositiveRecurrent => "positive-recurrent",
            Self::NullRecurrent => "null-recurrent",
            Self::Transient => "transient",
            Self::CriticalUnresolved => "critical-unresolved",
        }
    }
}

impl fmt::Display for ChainClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Finite law on `{0, …, K}` with precomputed cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePmf<T> {
    pmf: Vec<T>,
    cdf: Vec<T>,
    tail: Vec<T>,
}

impl<T: Real> DiscretePmf<T> {
    /// Builds the law, rejecting it unless the mass is within
    /// [`DISCRETE_SUM_TOL`] of one; the accepted vector is renormalized.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter("discrete law needs at least one atom".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= T::zero())) {
            return Err(Error::InvalidParameter("discrete probabilities must be finite and nonnegative".into()));
        }
        let sum = probs.iter().fold(T::zero(), |s, &p| s + p);
        if (sum - T::one()).abs() > T::lit(DISCRETE_SUM_TOL) {
            return Err(Error::InvalidParameter(format!("discrete probabilities sum to {sum}, not 1")));
        }
        let pmf: Vec<T> = probs.into_iter().map(|p| p / sum).collect();
        let k = pmf.len();
        let mut cdf = vec![T::zero(); k];
        let mut acc = T::zero();
        for (i, &p) in pmf.iter().enumerate() {
            acc = acc + p;
            cdf[i] = acc;
        }
        // Tails are summed from the right so small tail masses keep full precision.
        let mut tail = vec![T::zero(); k];
        let mut acc = T::zero();
        for i in (0..k).rev() {
            tail[i] = acc;
            acc = acc + pmf[i];
        }
        cdf[k - 1] = T::one();
        Ok(Self { pmf, cdf, tail })
    }

    /// Point mass at `k`.
    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![T::zero(); k + 1];
        probs[k] = T::one();
        Self::new(probs).expect("point mass is a valid law")
    }

    pub fn probs(&self) -> &[T] {
        &self.pmf
    }

    pub fn max_atom(&self) -> usize {
        self.pmf.len() - 1
    }

    fn index_at(&self, y: T) -> Option<usize> {
        if y < T::zero() {
            None
        } else {
            let k = y.floor().to_usize().unwrap_or(usize::MAX);
            Some(k.min(self.pmf.len() - 1))
        }
    }

    fn tail(&self, y: T) -> T {
        match self.index_at(y) {
            None => T::one(),
            Some(k) => self.tail[k],
        }
    }

    fn cdf(&self, y: T) -> T {
        match self.index_at(y) {
            None => T::zero(),
            Some(k) => self.cdf[k],
        }
    }

    fn quantile(&self, u: T) -> T {
        let k = self.cdf.partition_point(|&c| c < u).min(self.pmf.len() - 1);
        T::from_usize_lossy(k)
    }

    fn mean(&self) -> T {
        self.pmf
            .iter()
            .enumerate()
            .fold(T::zero(), |s, (k, &p)| s + T::from_usize_lossy(k) * p)
    }

    fn integrated_tail(&self, a: T) -> T {
        self.pmf.iter().enumerate().fold(T::zero(), |s, (k, &p)| {
            let excess = T::from_usize_lossy(k) - a.max(T::zero());
            if excess > T::zero() {
                s + excess * p
            } else {
                s
            }
        }) + (-a).max(T::zero())
    }
}

/// Law of the innovation η.
#[derive(Debug, Clone, PartialEq)]
pub enum InnovationModel<T> {
    /// `P(η > y) = c / (c + y)`.
    LogTail { c: T },
    /// `P(η > y) = (1 + y/σ)^(−α)`.
    ShiftedPareto { alpha: T, scale: T },
    /// `P(η > y) = exp(−(y/scale)^β)`.
    Weibull { beta: T, scale: T },
    /// `ln η ~ N(μ, σ²)`.
    LogNormalTail { mu: T, sigma: T },
    DiscreteInteger(DiscretePmf<T>),
}

impl<T: Real> InnovationModel<T> {
    pub fn log_tail(c: T) -> Result<Self> {
        Self::LogTail { c }.validated()
    }

    pub fn shifted_pareto(alpha: T, scale: T) -> Result<Self> {
        Self::ShiftedPareto { alpha, scale }.validated()
    }

    pub fn weibull(beta: T, scale: T) -> Result<Self> {
        Self::Weibull { beta, scale }.validated()
    }

    pub fn log_normal(mu: T, sigma: T) -> Result<Self> {
        Self::LogNormalTail { mu, sigma }.validated()
    }

    pub fn discrete(probs: Vec<T>) -> Result<Self> {
        Ok(Self::DiscreteInteger(DiscretePmf::new(probs)?))
    }

    /// Checks the family parameter constraints.
    pub fn validated(self) -> Result<Self> {
        let ok = |cond: bool, msg: &str| if cond { Ok(()) } else { Err(Error::InvalidParameter(msg.into())) };
        match &self {
            Self::LogTail { c } => ok(c.is_finite() && *c > T::zero(), "log-tail requires c > 0")?,
            Self::ShiftedPareto { alpha, scale } => {
                ok(alpha.is_finite() && *alpha > T::one(), "pareto requires alpha > 1")?;
                ok(scale.is_finite() && *scale > T::zero(), "pareto requires scale > 0")?;
            }
            Self::Weibull { beta, scale } => {
                ok(*beta > T::zero() && *beta < T::one(), "weibull requires 0 < beta < 1")?;
                ok(scale.is_finite() && *scale > T::zero(), "weibull requires scale > 0")?;
            }
            Self::LogNormalTail { mu, sigma } => {
                ok(mu.is_finite(), "lognormal requires finite mu")?;
                ok(sigma.is_finite() && *sigma > T::zero(), "lognormal requires sigma > 0")?;
            }
            Self::DiscreteInteger(_) => {}
        }
        Ok(self)
    }

    /// Survival function `P(η > y)`.
    pub fn tail(&self, y: T) -> T {
        if y < T::zero() {
            return T::one();
        }
        match self {
            Self::LogTail { c } => *c / (*c + y),
            Self::ShiftedPareto { alpha, scale } => (-*alpha * (y / *scale).ln_1p()).exp(),
            Self::Weibull { beta, scale } => (-(y / *scale).powf(*beta)).exp(),
            Self::LogNormalTail { mu, sigma } => {
                if y == T::zero() {
                    T::one()
                } else {
                    T::lit(0.5) * ((y.ln() - *mu) / (*sigma * T::SQRT_2())).erfc()
                }
            }
            Self::DiscreteInteger(d) => d.tail(y),
        }
    }

    /// Distribution function `P(η ≤ y)`, right-continuous.
    pub fn cdf(&self, y: T) -> T {
        if y < T::zero() {
            return T::zero();
        }
        match self {
            Self::LogTail { c } => y / (*c + y),
            Self::ShiftedPareto { alpha, scale } => -(-*alpha * (y / *scale).ln_1p()).exp_m1(),
            Self::Weibull { beta, scale } => -(-(y / *scale).powf(*beta)).exp_m1(),
            Self::LogNormalTail { mu, sigma } => {
                if y == T::zero() {
                    T::zero()
                } else {
                    T::lit(0.5) * (-(y.ln() - *mu) / (*sigma * T::SQRT_2())).erfc()
                }
            }
            Self::DiscreteInteger(d) => d.cdf(y),
        }
    }

    /// Generalized inverse `inf{y : cdf(y) ≥ u}` for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: T) -> Result<T> {
        if !(u > T::zero() && u < T::one()) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        Ok(match self {
            Self::LogTail { c } => *c * u / (T::one() - u),
            Self::ShiftedPareto { alpha, scale } => *scale * ((-(-u).ln_1p() / *alpha).exp_m1()),
            Self::Weibull { beta, scale } => *scale * (-(-u).ln_1p()).powf(T::one() / *beta),
            Self::LogNormalTail { .. } => self.bisect_quantile(u),
            Self::DiscreteInteger(d) => d.quantile(u),
        })
    }

    fn bisect_quantile(&self, u: T) -> T {
        let tol = T::lit(QUANTILE_TOL);
        let mut lo = T::zero();
        let mut hi = T::one();
        while self.cdf(hi) < u {
            lo = hi;
            hi = hi * T::lit(2.0);
            if !hi.is_finite() {
                return T::max_value();
            }
        }
        while hi - lo > tol {
            let mid = T::lit(0.5) * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Inverse-transform sample driven by one uniform `u ∈ (0, 1)`.
    pub fn sample_from_uniform(&self, u: T) -> T {
        self.quantile(u).expect("uniform must lie in (0, 1)")
    }

    /// One draw from the caller's stream.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> T {
        self.sample_from_uniform(T::lit(open_unit(rng)))
    }

    /// `E[η⁺]`; `+∞` for the log-tail family.
    pub fn mean_upper(&self) -> T {
        match self {
            Self::LogTail { .. } => T::infinity(),
            Self::ShiftedPareto { alpha, scale } => *scale / (*alpha - T::one()),
            Self::Weibull { beta, scale } => *scale * (T::one() + T::one() / *beta).gamma(),
            Self::LogNormalTail { mu, sigma } => (*mu + T::lit(0.5) * *sigma * *sigma).exp(),
            Self::DiscreteInteger(d) => d.mean(),
        }
    }

    /// `∫_a^∞ P(η > y) dy`, i.e. `E[(η − a)⁺]` for `a ≥ 0`.
    pub fn integrated_tail(&self, a: T) -> T {
        let neg = (-a).max(T::zero());
        let a = a.max(T::zero());
        neg + match self {
            Self::LogTail { .. } => T::infinity(),
            Self::ShiftedPareto { alpha, scale } => {
                *scale / (*alpha - T::one()) * ((T::one() - *alpha) * (a / *scale).ln_1p()).exp()
            }
            Self::Weibull { beta, scale } => {
                let shape = T::one() / *beta;
                let x = (a / *scale).powf(*beta);
                let q = if x == T::zero() { 1.0 } else { statrs::function::gamma::gamma_ur(shape.as_f64(), x.as_f64()) };
                *scale * shape * shape.gamma() * T::lit(q)
            }
            Self::LogNormalTail { mu, sigma } => {
                if a == T::zero() {
                    self.mean_upper()
                } else {
                    let d2 = (*mu - a.ln()) / *sigma;
                    let d1 = d2 + *sigma;
                    let phi = |z: T| T::lit(0.5) * (-z / T::SQRT_2()).erfc();
                    self.mean_upper() * phi(d1) - a * phi(d2)
                }
            }
            Self::DiscreteInteger(d) => d.integrated_tail(a),
        }
    }

    pub fn classify(&self) -> ChainClassification {
        match self {
            Self::LogTail { c } if *c < T::one() => ChainClassification::NullRecurrent,
            Self::LogTail { c } if *c > T::one() => ChainClassification::Transient,
            Self::LogTail { .. } => ChainClassification::CriticalUnresolved,
            _ => ChainClassification::PositiveRecurrent,
        }
    }

    /// `d = c · ln A` for the log-tail family: `P(ξ > x) ~ d / ln x`.
    pub fn log_tail_d(&self, a: T) -> Option<T> {
        match self {
            Self::LogTail { c } => Some(*c * a.ln()),
            _ => None,
        }
    }

    /// Tail index `c` of the log-tail family.
    pub fn log_tail_index(&self) -> Option<T> {
        match self {
            Self::LogTail { c } => Some(*c),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::DiscreteInteger(_))
    }

    /// Ratio `∫_0^x F̄(x−y)F̄(y) dy / F̄(x)` from the strong-subexponential
    /// definition; tends to `2 E[η⁺]` for members of that class.
    pub fn sstar_ratio(&self, x: T) -> Result<T> {
        if !self.mean_upper().is_finite() {
            return Err(Error::Divergent("strong subexponential ratio needs a finite mean".into()));
        }
        if x <= T::zero() {
            return Ok(T::zero());
        }
        let fx = self.tail(x);
        if fx <= T::zero() {
            return Err(Error::Domain(format!("tail vanishes at {x}")));
        }
        let opts = QuadOptions::new(T::zero(), T::lit(1e-8));
        let half = T::lit(0.5) * x;
        let f = |y: T| self.tail(x - y) * self.tail(y) / fx;
        // Symmetric integrand: integrate over [0, x/2] and double.
        let mut points = vec![T::zero()];
        if let Self::DiscreteInteger(_) = self {
            // Break at the jumps of both factors so each piece is smooth.
            let mut k = T::one();
            while k < x {
                if k < half {
                    points.push(k);
                }
                if x - k > T::zero() && x - k < half {
                    points.push(x - k);
                }
                k = k + T::one();
            }
            points.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
            points.dedup();
        }
        points.push(half);
        let mut total = T::zero();
        for w in points.windows(2) {
            total = total + integrate(f, w[0], w[1], &opts)?.value;
        }
        Ok(T::lit(2.0) * total)
    }

    /// `F̄(x − ln x) / F̄(x)` for `x ≥ 1`.
    pub fn log_insens_ratio(&self, x: T) -> Result<T> {
        if x < T::one() {
            return Err(Error::Domain(format!("log-insensitivity ratio needs x >= 1, got {x}")));
        }
        match self {
            // Both tails underflow long before the ratio settles.
            Self::Weibull { beta, scale } => {
                Ok(((x / *scale).powf(*beta) - ((x - x.ln()) / *scale).powf(*beta)).exp())
            }
            _ => Ok(self.tail(x - x.ln()) / self.tail(x)),
        }
    }
}

impl InnovationModel<f64> {
    /// Loads a discrete law from a text file with one probability per line.
    pub fn load_discrete(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let probs = parse_prob_lines(&text)?;
        Self::discrete(probs)
    }
}

fn parse_prob_lines(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().map_err(|e| Error::Parse(format!("bad probability {l:?}: {e}"))))
        .collect()
}

impl fmt::Display for InnovationModel<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LogTail { c } => write!(f, "log-tail:c={c}"),
            Self::ShiftedPareto { alpha, scale } => write!(f, "pareto:alpha={alpha},scale={scale}"),
            Self::Weibull { beta, scale } => write!(f, "weibull:beta={beta},scale={scale}"),
            Self::LogNormalTail { mu, sigma } => write!(f, "lognormal:mu={mu},sigma={sigma}"),
            Self::DiscreteInteger(d) => {
                let probs: Vec<String> = d.probs().iter().map(|p| p.to_string()).collect();
                write!(f, "discrete:probs={}", probs.join("/"))
            }
        }
    }
}

/// Parses the CLI model syntax, e.g. `log-tail:c=0.5`, `pareto:alpha=2,scale=1`,
/// `weibull:beta=0.5,scale=1`, `lognormal:mu=0,sigma=1`, `discrete:file=PATH`
/// or the inline `discrete:probs=0.5/0.2/0.3`.
impl FromStr for InnovationModel<f64> {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let (family, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("model spec {spec:?} lacks a family prefix")))?;
        let mut params = Vec::new();
        for item in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in {item:?}")))?;
            params.push((k.trim(), v.trim()));
        }
        let get = |key: &str| -> Result<f64> {
            let raw = params
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Parse(format!("{family} model needs `{key}`")))?;
            raw.parse::<f64>().map_err(|e| Error::Parse(format!("bad value for {key}: {e}")))
        };
        let known = |allowed: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !allowed.contains(k)) {
                Some((k, _)) => Err(Error::Parse(format!("unknown parameter `{k}` for {family}"))),
                None => Ok(()),
            }
        };
        match family.trim() {
            "log-tail" => {
                known(&["c"])?;
                Self::log_tail(get("c")?)
            }
            "pareto" => {
                known(&["alpha", "scale"])?;
                Self::shifted_pareto(get("alpha")?, get("scale")?)
            }
            "weibull" => {
                known(&["beta", "scale"])?;
                Self::weibull(get("beta")?, get("scale")?)
            }
            "lognormal" => {
                known(&["mu", "sigma"])?;
                Self::log_normal(get("mu")?, get("sigma")?)
            }
            "discrete" => {
                known(&["file", "probs"])?;
                if let Some((_, path)) = params.iter().find(|(k, _)| *k == "file") {
                    Self::load_discrete(path)
                } else if let Some((_, list)) = params.iter().find(|(k, _)| *k == "probs") {
                    let probs = list
                        .split('/')
                        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad probability {s:?}: {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                    Self::discrete(probs)
                } else {
                    Err(Error::Parse("discrete model needs `file` or `probs`".into()))
                }
            }
            other => Err(Error::Parse(format!("unknown model family `{other}`"))),
        }
    }
}

//! Simulation of the AR(1), max-autoregressive and random exchange chains.
//!
//! All states are carried in `log_A` units. For the AR(1) chain this is
//! what keeps `A^Θ(n)` magnitudes representable; for the max-AR chain it is
//! exact, since `log_A M_n` *is* the random exchange process.
//!
//! Replicate `i` always uses [`substream`]`(master_seed, i)` and survival
//! indicators are aggregated as integer counts, so every estimator here is
//! a deterministic function of its configuration, independent of the rayon
//! pool it runs on.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_r::u0_integral;
use crate::innovations::{ChainClassification, InnovationModel};
use crate::rng::substream;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainKind {
    /// `X_n = a X_{n−1} + ξ_n`.
    ArOne,
    /// `M_n = max(a M_{n−1}, ξ_n)`.
    MaxAr,
    /// `R_n = max(R_{n−1} − 1, η_n)`.
    RandomExchange,
}

impl ChainKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::ArOne => "ar",
            Self::MaxAr => "max-ar",
            Self::RandomExchange => "random-exchange",
        }
    }
}

impl std::str::FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar" | "ar1" | "ar-one" => Ok(Self::ArOne),
            "max-ar" | "maxar" => Ok(Self::MaxAr),
            "random-exchange" | "rx" => Ok(Self::RandomExchange),
            other => Err(Error::Parse(format!("unknown chain kind `{other}`"))),
        }
    }
}

/// Simulation parameters. Thresholds and starts are in `log_A` units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    /// `A = 1/a > 1`.
    pub a: T,
    pub x0_log: T,
    pub start_log: T,
    pub horizon_cap: u64,
    pub master_seed: u64,
    pub replicates: u64,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > T::one() && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("A must exceed 1, got {}", self.a)));
        }
        if !(self.start_log > self.x0_log) {
            return Err(Error::InvalidParameter(format!(
                "start {} must lie above the threshold {}",
                self.start_log, self.x0_log
            )));
        }
        if self.horizon_cap == 0 {
            return Err(Error::InvalidParameter("horizon cap must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("at least one replicate is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecurrenceOutcome {
    Hit(u64),
    Censored(u64),
}

impl RecurrenceOutcome {
    /// Whether the chain is still above the threshold after `n` steps.
    pub fn survives(&self, n: u64) -> bool {
        match *self {
            Self::Hit(t) => t > n,
            Self::Censored(cap) => {
                debug_assert!(n <= cap);
                true
            }
        }
    }
}

/// Monte Carlo estimate of `P(T > n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate<T> {
    pub n: u64,
    pub p_hat: T,
    pub std_err: T,
    pub replicates: u64,
    pub survivors: u64,
}

impl<T: Real> TailEstimate<T> {
    fn from_counts(n: u64, survivors: u64, replicates: u64) -> Self {
        let p = T::lit(survivors as f64 / replicates as f64);
        let se = (p * (T::one() - p) / T::lit(replicates as f64)).sqrt();
        Self { n, p_hat: p, std_err: se, replicates, survivors }
    }
}

/// Sample mean with a normal 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate<T> {
    pub mean: T,
    pub std_err: T,
    pub ci_low: T,
    pub ci_high: T,
    pub replicates: u64,
}

/// Replicate values of `state_{⌊nt⌋} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMarginal<T> {
    pub values: Vec<T>,
    pub kept: u64,
    pub replicates: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VEstimate<T> {
    pub value: T,
    pub std_err: T,
    pub replicates: u64,
}

#[inline]
pub fn step_random_exchange<T: Real>(r: T, eta: T) -> T {
    (r - T::one()).max(eta)
}

/// `log_A(A^(l−1) + A^eta)` without leaving the log domain.
#[inline]
pub fn step_ar_log<T: Real>(l: T, eta: T, a: T) -> T {
    let drifted = l - T::one();
    let hi = drifted.max(eta);
    let gap = (drifted - eta).abs();
    let ln_a = a.ln();
    hi + (-gap * ln_a).exp().ln_1p() / ln_a
}

#[inline]
pub fn step<T: Real>(kind: ChainKind, state: T, eta: T, a: T) -> T {
    match kind {
        ChainKind::ArOne => step_ar_log(state, eta, a),
        ChainKind::MaxAr | ChainKind::RandomExchange => step_random_exchange(state, eta),
    }
}

/// `log_A(A/(A−1))`: with `ξ ≥ 1`, AR(1) paths started above this level
/// never reach it, so recurrence thresholds for that chain must exceed it.
pub fn ar_floor_log<T: Real>(a: T) -> T {
    (a / (a - T::one())).ln() / a.ln()
}

/// First `n ≥ 1` with `state_n ≤ x0_log`, or `Censored(horizon_cap)`.
pub fn simulate_recurrence_time<T: Real, R: RngCore + ?Sized>(
    kind: ChainKind,
    model: &InnovationModel<T>,
    config: &SimConfig<T>,
    rng: &mut R,
) -> RecurrenceOutcome {
    run_until(kind, model, config, config.horizon_cap, rng)
}

fn run_until<T: Real, R: RngCore + ?Sized>(
    kind: ChainKind,
    model: &InnovationModel<T>,
    config: &SimConfig<T>,
    cap: u64,
    rng: &mut R,
) -> RecurrenceOutcome {
    let mut state = config.start_log;
    for n in 1..=cap {
        state = step(kind, state, model.sample(rng), config.a);
        if state <= config.x0_log {
            return RecurrenceOutcome::Hit(n);
        }
    }
    RecurrenceOutcome::Censored(cap)
}

/// Recurrence times for every replicate, in replicate order.
pub fn recurrence_times<T: Real>(
    kind: ChainKind,
    model: &InnovationModel<T>,
    config: &SimConfig<T>,
) -> Result<Vec<RecurrenceOutcome>> {
    config.validate()?;
    Ok((0..config.replicates)
        .into_par_iter()
        .map(|i| simulate_recurrence_time(kind, model, config, &mut substream(config.master_seed, i)))
        .collect())
}

fn check_grid(n_grid: &[u64], cap: u64) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::InvalidParameter("empty n grid".into()));
    }
    if n_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("n grid must be sorted ascending".into()));
    }
    if *n_grid.last().expect("nonempty") > cap {
        return Err(Error::InvalidParameter(format!("n grid exceeds the horizon cap {cap}")));
    }
    Ok(())
}

/// Survival counts on a grid from already simulated outcomes.
pub fn tail_from_outcomes<T: Real>(outcomes: &[RecurrenceOutcome], n_grid: &[u64]) -> Result<Vec<TailEstimate<T>>> {
    let cap = outcomes
        .iter()
        .map(|o| match *o {
            RecurrenceOutcome::Censored(c) => c,
            RecurrenceOutcome::Hit(_) => u64::MAX,
        })
        .min()
        .unwrap_or(u64::MAX);
    check_grid(n_grid, cap)?;
    let reps = outcomes.len() as u64;
    if reps == 0 {
        return Err(Error::InvalidParameter("no outcomes".into()));
    }
    Ok(n_grid
        .iter()
        .map(|&n| TailEstimate::from_counts(n, outcomes.iter().filter(|o| o.survives(n)).count() as u64, reps))
        .collect())
}

/// Estimates `P(T > n)` for every `n` in the sorted grid.
///
/// Each replicate is simulated once up to `max(n_grid)`; the estimates are
/// non-increasing along the grid by construction.
pub fn estimate_tail<T: Real>(
    kind: ChainKind,
    model: &InnovationModel<T>,
    config: &SimConfig<T>,
    n_grid: &[u64],
) -> Result<Vec<TailEstimate<T>>> {
    config.validate()?;
    check_grid(n_grid, config.horizon_cap)?;
    let cap = *n_grid.last().expect("nonempty");
    let bins = n_grid.len() + 1;
    // hist[j] = number of replicates surviving exactly the first j grid points.
    let hist = (0..config.replicates)
        .into_par_iter()
        .fold(
            || vec![0u64; bins],
            |mut hist, i| {
                let out = run_until(kind, model, config, cap.max(1), &mut substream(config.master_seed, i));
                let survived = n_grid.iter().take_while(|&&n| out.survives(n)).count();
                hist[survived] += 1;
                hist
            },
        )
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut survivors = config.replicates;
    let mut out = Vec::with_capacity(n_grid.len());
    for (j, &n) in n_grid.iter().enumerate() {
        survivors -= hist[j];
        out.push(TailEstimate::from_counts(n, survivors, config.replicates));
    }
    Ok(out)
}

/// Mean recurrence time from outcomes; refuses censored data.
pub fn mean_from_outcomes<T: Real>(outcomes: &[RecurrenceOutcome]) -> Result<MeanEstimate<T>> {
    let reps = outcomes.len() as u64;
    if reps == 0 {
        return Err(Error::InvalidParameter("no outcomes".into()));
    }
    let mut sum: u128 = 0;
    let mut sumsq: u128 = 0;
    let mut censored = 0u64;
    let mut cap = 0u64;
    for o in outcomes {
        match *o {
            RecurrenceOutcome::Hit(t) => {
                sum += t as u128;
                sumsq += (t as u128) * (t as u128);
            }
            RecurrenceOutcome::Censored(c) => {
                censored += 1;
                cap = c;
            }
        }
    }
    if censored > 0 {
        return Err(Error::Censored { censored, replicates: reps, cap });
    }
    Ok(mean_from_sums(sum, sumsq, reps))
}

fn mean_from_sums<T: Real>(sum: u128, sumsq: u128, reps: u64) -> MeanEstimate<T> {
    let n = reps as u128;
    let mean = sum as f64 / reps as f64;
    let var = if reps > 1 {
        // Exact integer numerator: N Σt² − (Σt)².
        (n * sumsq - sum * sum) as f64 / (reps as f64 * (reps - 1) as f64)
    } else {
        0.0
    };
    let se = (var / reps as f64).sqrt();
    MeanEstimate {
        mean: T::lit(mean),
        std_err: T::lit(se),
        ci_low: T::lit(mean - 1.96 * se),
        ci_high: T::lit(mean + 1.96 * se),
        replicates: reps,
    }
}

/// Sample mean of `T` over the replicates with a normal confidence interval.
pub fn estimate_expected_t<T: Real>(
    kind: ChainKind,
    model: &InnovationModel<T>,
    config: &SimConfig<T>,
) -> Result<MeanEstimate<T>> {
    config.validate()?;
    if model.classify() != ChainClassification::PositiveRecurrent {
        return Err(Error::Hypothesis(format!(
            "expected recurrence time is infinite or undefined for a {} chain",
            model.classify()
        )));
    }
    let (sum, sumsq, censored) = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            match simulate_recurrence_time(kind, model, config, &mut substream(config.master_seed, i)) {
                RecurrenceOutcome::Hit(t) => (t as u128, (t as u128) * (t as u128), 0u64),
                RecurrenceOutcome::Censored(_) => (0, 0, 1),
            }
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if censored > 0 {
        return Err(Error::Censored { censored, replicates: config.replicates, cap: config.horizon_cap });
    }
    Ok(mean_from_sums(sum, sumsq, config.replicates))
}

/// Draws `state_{⌊nt⌋} / n` per replicate, optionally keeping only replicates
/// with `T > n`. Unconditioned paths are free (not killed at the threshold).
pub fn sample_scaled_marginal<T: Real>(
    kind: ChainKind,
    model: &InnovationModel<T>,
    config: &SimConfig<T>,
    t: T,
    n: u64,
    condition_on_survival: bool,
) -> Result<ScaledMarginal<T>> {
    config.validate()?;
    if !(t > T::zero() && t <= T::one()) {
        return Err(Error::Domain(format!("time fraction must lie in (0, 1], got {t}")));
    }
    let m = (T::lit(n as f64) * t).floor().to_u64().unwrap_or(0);
    if m < 1 {
        return Err(Error::Domain(format!("floor(n t) must be at least 1 (n = {n}, t = {t})")));
    }
    let horizon = if condition_on_survival { n } else { m };
    let scale = T::lit(n as f64);
    let draws: Vec<Option<T>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.master_seed, i);
            let mut state = config.start_log;
            let mut at_m = state;
            for k in 1..=horizon {
                state = step(kind, state, model.sample(&mut rng), config.a);
                if condition_on_survival && state <= config.x0_log {
                    return None;
                }
                if k == m {
                    at_m = state;
                }
            }
            Some(at_m / scale)
        })
        .collect();
    let values: Vec<T> = draws.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::NoneKept { replicates: config.replicates });
    }
    Ok(ScaledMarginal { kept: values.len() as u64, values, replicates: config.replicates })
}

/// Monte Carlo estimate of `E_x[U₀(log_A X_n); T > n]` for the AR(1) chain.
pub fn estimate_v<T: Real>(
    model: &InnovationModel<T>,
    a: T,
    x0_log: T,
    x_log: T,
    n: u64,
    replicates: u64,
    master_seed: u64,
) -> Result<VEstimate<T>> {
    let config = SimConfig { a, x0_log, start_log: x_log, horizon_cap: n.max(1), master_seed, replicates };
    config.validate()?;
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(master_seed, i);
            let mut state = x_log;
            for _ in 0..n {
                state = step_ar_log(state, model.sample(&mut rng), a);
                if state <= x0_log {
                    return Ok(0.0);
                }
            }
            u0_integral(model, state.max(T::zero())).map(|v| v.as_f64())
        })
        .collect::<Result<_>>()?;
    // Summed in replicate order so the result does not depend on scheduling.
    let reps = replicates as f64;
    let mean = values.iter().sum::<f64>() / reps;
    let var = if replicates > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1.0)
    } else {
        0.0
    };
    Ok(VEstimate { value: T::lit(mean), std_err: T::lit((var / reps).sqrt()), replicates })
}

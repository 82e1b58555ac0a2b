//! Exact quantities for the random exchange chain `R_n = max(R_{n−1} − 1, η_n)`.
//!
//! Everything is built from the cell probabilities `p[k] = P(η ≤ x₀ + k)`
//! and their running products `π_j = ∏_{k<j} p[k]`. A start `x` lies in cell
//! `k` when `x ∈ (x₀ + k, x₀ + k + 1]`; all hitting quantities are constant
//! on cells.

use std::path::Path;

use crate::chains::step_ar_log;
use crate::error::{Error, Result};
use crate::innovations::InnovationModel;
use crate::quadrature::{integrate, integrate_pieces, integrate_to_infinity, QuadOptions};
use crate::scalar::Real;

/// Truncation tolerance for infinite products and series.
pub const PRODUCT_TOL: f64 = 1e-12;
/// Hard cap on explicitly multiplied factors of an infinite product.
const MAX_PRODUCT_TERMS: usize = 50_000_000;
/// Cells summed explicitly before the closed-form remainder in the
/// harmonicity check.
const HARMONIC_CELLS: usize = 10_000;

/// Cell `k` with `x ∈ (x₀ + k, x₀ + k + 1]`.
pub fn cell_index<T: Real>(x0: T, x: T) -> Result<usize> {
    if !(x > x0) || !x.is_finite() {
        return Err(Error::Domain(format!("point {x} must lie above the threshold {x0}")));
    }
    ((x - x0).ceil() - T::one())
        .to_usize()
        .ok_or_else(|| Error::OutOfRange(format!("cell of {x} not representable")))
}

#[inline]
fn at<T: Real>(x0: T, k: usize) -> T {
    x0 + T::from_usize_lossy(k)
}

/// CDF of `η` sampled at the cell boundaries `x₀ + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid<T> {
    model: InnovationModel<T>,
    x0: T,
    p: Vec<T>,
    q: Vec<T>,
}

/// Tabulates `p[k]` and `q[k] = 1 − p[k]` (the latter from the tail directly)
/// for `k = 0..=kmax`.
pub fn cdf_grid<T: Real>(model: &InnovationModel<T>, x0: T, kmax: usize) -> Result<CdfGrid<T>> {
    if !x0.is_finite() {
        return Err(Error::InvalidParameter(format!("threshold must be finite, got {x0}")));
    }
    let (p0, q0) = (model.cdf(x0), model.tail(x0));
    if !(p0 > T::zero() && q0 > T::zero()) {
        return Err(Error::Hypothesis(format!(
            "need P(η ≤ x₀)·P(η > x₀) > 0, got {p0}·{q0} at x₀ = {x0}"
        )));
    }
    Ok(CdfGrid {
        model: model.clone(),
        x0,
        p: (0..=kmax).map(|k| model.cdf(at(x0, k))).collect(),
        q: (0..=kmax).map(|k| model.tail(at(x0, k))).collect(),
    })
}

impl<T: Real> CdfGrid<T> {
    pub fn x0(&self) -> T {
        self.x0
    }

    pub fn kmax(&self) -> usize {
        self.p.len() - 1
    }

    pub fn model(&self) -> &InnovationModel<T> {
        &self.model
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    /// `p[k]`, evaluated from the model past the tabulated range.
    pub fn p_at(&self, k: usize) -> T {
        self.p.get(k).copied().unwrap_or_else(|| self.model.cdf(at(self.x0, k)))
    }

    pub fn q_at(&self, k: usize) -> T {
        self.q.get(k).copied().unwrap_or_else(|| self.model.tail(at(self.x0, k)))
    }

    /// `π_0, …, π_n`.
    pub fn products(&self, n: usize) -> Vec<T> {
        let mut pi = Vec::with_capacity(n + 1);
        pi.push(T::one());
        for j in 1..=n {
            pi.push(pi[j - 1] * self.p_at(j - 1));
        }
        pi
    }
}

/// `π_∞ = ∏_{k≥0} P(η ≤ x₀ + k)`.
///
/// Zero when `E η⁺ = ∞`. Otherwise factors are multiplied (in log form) until
/// `q_k ≤ tol`; the remaining `Σ_{k≥K} q_k` is taken as the midpoint of
/// `∫_{x₀+K}^∞ F̄ ≤ Σ ≤ ∫_{x₀+K−1}^∞ F̄`, which errs by at most `q_{K−1}/2`.
pub fn infinite_product<T: Real>(model: &InnovationModel<T>, x0: T, tol: T) -> Result<T> {
    if !model.mean_upper().is_finite() {
        return Ok(T::zero());
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut log_sum = T::zero();
    let mut k = 0usize;
    loop {
        let q = model.tail(at(x0, k));
        if q == T::zero() {
            return Ok(log_sum.exp());
        }
        if q >= T::one() {
            return Ok(T::zero());
        }
        if q <= tol || k >= MAX_PRODUCT_TERMS {
            break;
        }
        log_sum = log_sum + (-q).ln_1p();
        k += 1;
    }
    let lo = model.integrated_tail(at(x0, k));
    let hi = model.integrated_tail(at(x0, k) - T::one());
    Ok((log_sum - T::lit(0.5) * (lo + hi)).exp())
}

/// `G` tabulated on cells: `G[n]` is the value on `(x₀+n, x₀+n+1]`, `G[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTable<T> {
    x0: T,
    g: Vec<T>,
}

/// `G[n] = 1 + Σ_{j=1}^{n} π_j`.
pub fn harmonic_table<T: Real>(grid: &CdfGrid<T>, nmax: usize) -> HarmonicTable<T> {
    let mut g = Vec::with_capacity(nmax + 1);
    g.push(T::one());
    let mut pi = T::one();
    for n in 1..=nmax {
        pi = pi * grid.p_at(n - 1);
        g.push(g[n - 1] + pi);
    }
    HarmonicTable { x0: grid.x0, g }
}

impl<T: Real> HarmonicTable<T> {
    pub fn values(&self) -> &[T] {
        &self.g
    }

    /// `G(x)` for `x` inside the tabulated range.
    pub fn value(&self, x: T) -> Result<T> {
        let n = cell_index(self.x0, x)?;
        self.g
            .get(n)
            .copied()
            .ok_or_else(|| Error::OutOfRange(format!("cell {n} beyond table of {} cells", self.g.len())))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_series(path, "G_n", &self.g)
    }
}

/// `G(x)` with the normalization `G ≡ 1` on `(x₀, x₀+1]`.
pub fn harmonic_g<T: Real>(grid: &CdfGrid<T>, x: T) -> Result<T> {
    let n = cell_index(grid.x0, x)?;
    Ok(*harmonic_table(grid, n).g.last().expect("nonempty"))
}

/// `G(x) − E_x[G(R₁); T > 1]`.
///
/// The expectation is a sum over cells: `G` is constant on each, so the cell
/// contributes `G[j]·(q_j − q_{j+1})` exactly. The first `10⁴` cells are summed
/// explicitly; the rest telescopes (Abel summation with `π_j q_j = π_j − π_{j+1}`)
/// to `G[J] q_J + π_{J+1} − π_∞`. `tol` controls the evaluation of `π_∞`.
pub fn check_harmonicity<T: Real>(model: &InnovationModel<T>, x0: T, x: T, tol: T) -> Result<T> {
    let grid = cdf_grid(model, x0, 0)?;
    let n = cell_index(x0, x)?;
    let last = n + HARMONIC_CELLS;
    let mut g = Vec::with_capacity(last + 1);
    let mut pi = vec![T::one()];
    g.push(T::one());
    for j in 1..=last + 1 {
        pi.push(pi[j - 1] * grid.p_at(j - 1));
        if j <= last {
            g.push(g[j - 1] + pi[j]);
        }
    }
    let pi_inf = infinite_product(model, x0, tol)?;

    let mut expected = T::zero();
    if n >= 1 {
        // R₁ = x − 1 when η ≤ x − 1, and x − 1 is still above x₀.
        expected = expected + g[n - 1] * model.cdf(x - T::one());
        // η ∈ (x − 1, x₀ + n]: the rest of cell n − 1.
        expected = expected + g[n - 1] * (model.tail(x - T::one()) - grid.q_at(n));
    }
    for (j, &gj) in g.iter().enumerate().take(last).skip(n) {
        expected = expected + gj * (grid.q_at(j) - grid.q_at(j + 1));
    }
    expected = expected + g[last] * grid.q_at(last) + (pi[last + 1] - pi_inf);
    Ok(g[n] - expected)
}

/// `P_x(T = ∞)` for a transient chain: `G(x) / G(∞)`.
///
/// Only the log-tail family with `c > 1` is transient; its products satisfy
/// `π_{j+1}/π_j = (x₀+j)/(c+x₀+j)`, whence the exact remainder
/// `Σ_{j>J} π_j = π_{J+1}(x₀+J+c)/(c−1)`.
pub fn transient_return_prob<T: Real>(grid: &CdfGrid<T>, x: T) -> Result<T> {
    let c = transient_index(grid)?;
    let n = cell_index(grid.x0, x)?;
    let j_max = n + 64;
    let pi = grid.products(j_max + 1);
    let partial: T = pi[1..=j_max].iter().fold(T::one(), |s, &v| s + v);
    let numerator: T = pi[1..=n].iter().fold(T::one(), |s, &v| s + v);
    let remainder = pi[j_max + 1] * (at(grid.x0, j_max) + c) / (c - T::one());
    Ok(numerator / (partial + remainder))
}

fn transient_index<T: Real>(grid: &CdfGrid<T>) -> Result<T> {
    match grid.model.log_tail_index() {
        Some(c) if c > T::one() => Ok(c),
        _ => Err(Error::Divergent(format!(
            "Σ π_j diverges: the chain is {}, not transient",
            grid.model.classify()
        ))),
    }
}

/// Karamata form of `P_x(T < ∞)` for the transient log-tail chain:
/// `L(x) x^{1−c} / ((c−1) D)` with `L(x) = π_m m^c` at the first index `m`
/// excluded from the numerator of [`transient_return_prob`], and
/// `D = 1 + Σ_{j≥1} π_j = (x₀+c−1)/(c−1)` the full normalizer.
pub fn return_prob_asymptote<T: Real>(grid: &CdfGrid<T>, x: T) -> Result<T> {
    let c = transient_index(grid)?;
    let m = cell_index(grid.x0, x)? + 1;
    let pi_m = *grid.products(m).last().expect("nonempty");
    let l = pi_m * T::from_usize_lossy(m).powf(c);
    let d = (grid.x0 + c - T::one()) / (c - T::one());
    Ok(l * x.powf(T::one() - c) / ((c - T::one()) * d))
}

/// `E_x T = G(x) / π_∞`; `+∞` when `E η⁺ = ∞`.
pub fn expected_t_exact<T: Real>(grid: &CdfGrid<T>, x: T) -> Result<T> {
    if !grid.model.mean_upper().is_finite() {
        cell_index(grid.x0, x)?;
        return Ok(T::infinity());
    }
    let pi_inf = infinite_product(&grid.model, grid.x0, T::lit(PRODUCT_TOL))?;
    Ok(harmonic_g(grid, x)? / pi_inf)
}

/// `v[n] = P_{x₀+1}(T > n)` together with the weights of its recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct TailTable<T> {
    x0: T,
    v: Vec<T>,
    d: Vec<T>,
    c_seq: Vec<T>,
    pi: Vec<T>,
}

/// Runs the renewal-type recursion
/// `v_n = c_n + Σ_{m=0}^{n−2} v_{n−1−m} (d_m − π_m c_n)` with `c_n = q[n−1]`,
/// `d_m = π_m q[m]`, written as `π_m (q[m] − q[n−1])` so that every term is a
/// non-negative product of directly evaluated tails.
pub fn tail_table<T: Real>(grid: &CdfGrid<T>, nmax: usize) -> Result<TailTable<T>> {
    if nmax < 1 {
        return Err(Error::InvalidParameter("nmax must be at least 1".into()));
    }
    if grid.kmax() < nmax {
        return Err(Error::OutOfRange(format!("grid has kmax {} < nmax {nmax}", grid.kmax())));
    }
    let q = &grid.q;
    let pi = grid.products(nmax);
    let d: Vec<T> = (0..nmax).map(|m| pi[m] * q[m]).collect();
    let mut c_seq = Vec::with_capacity(nmax + 1);
    c_seq.push(grid.model.tail(grid.x0 - T::one()));
    c_seq.extend_from_slice(&q[..nmax]);

    let mut v = Vec::with_capacity(nmax + 1);
    v.push(T::one());
    for n in 1..=nmax {
        let qn = q[n - 1];
        let sum = v[1..n]
            .iter()
            .rev()
            .zip(pi.iter().zip(q.iter()))
            .fold(T::zero(), |s, (&vv, (&w, &qm))| s + vv * w * (qm - qn));
        v.push(qn + sum);
    }
    Ok(TailTable { x0: grid.x0, v, d, c_seq, pi })
}

impl<T: Real> TailTable<T> {
    pub fn nmax(&self) -> usize {
        self.v.len() - 1
    }

    pub fn x0(&self) -> T {
        self.x0
    }

    pub fn v(&self) -> &[T] {
        &self.v
    }

    pub fn d(&self) -> &[T] {
        &self.d
    }

    pub fn c_seq(&self) -> &[T] {
        &self.c_seq
    }

    pub fn products(&self) -> &[T] {
        &self.pi
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_series(path, "v_n", &self.v)
    }
}

/// `v(n, k) = P_x(T > n)` for a start `x` in cell `k`.
pub fn tail_at<T: Real>(table: &TailTable<T>, n: usize, k: usize) -> Result<T> {
    if n > table.nmax() {
        return Err(Error::OutOfRange(format!("n = {n} beyond table size {}", table.nmax())));
    }
    if n <= k {
        return Ok(T::one());
    }
    Ok((1..=k).fold(table.v[n], |s, m| s + table.v[n - m] * table.pi[m]))
}

/// `P_x(T > n)` for an arbitrary start `x > x₀`.
pub fn tail_from<T: Real>(table: &TailTable<T>, n: usize, x: T) -> Result<T> {
    tail_at(table, n, cell_index(table.x0, x)?)
}

fn write_series<T: Real>(path: impl AsRef<Path>, column: &str, values: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", column])?;
    for (n, v) in values.iter().enumerate() {
        w.write_record([n.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn check_eps<T: Real>(model: &InnovationModel<T>, eps: T) -> Result<()> {
    if !(eps >= T::zero()) || !eps.is_finite() {
        return Err(Error::Domain(format!("ε must be a finite non-negative number, got {eps}")));
    }
    if let Some(c) = model.log_tail_index() {
        if eps > T::zero() && !(eps < (T::one() - c) / c) {
            return Err(Error::Domain(format!("ε = {eps} outside [0, (1−c)/c) for c = {c}")));
        }
    }
    Ok(())
}

/// `u_ε(y) = (1+ε) ∫_0^y F̄`.
pub fn u_eps<T: Real>(model: &InnovationModel<T>, y: T, eps: T) -> T {
    let y = y.max(T::zero());
    let integral = match model {
        InnovationModel::LogTail { c } => *c * (y / *c).ln_1p(),
        _ => model.integrated_tail(T::zero()) - model.integrated_tail(y),
    };
    (T::one() + eps) * integral
}

/// `U_ε(x) = ∫_0^x e^{−u_ε(y)} dy`.
pub fn ueps_integral<T: Real>(model: &InnovationModel<T>, x: T, eps: T) -> Result<T> {
    check_eps(model, eps)?;
    if !(x >= T::zero()) {
        return Err(Error::Domain(format!("U integrals need x ≥ 0, got {x}")));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    match model {
        InnovationModel::LogTail { c } => {
            let r = (T::one() + eps) * *c;
            let one_r = T::one() - r;
            if one_r.abs() < T::lit(1e-12) {
                Ok(*c * (x / *c).ln_1p())
            } else {
                Ok(c.powf(r) * ((*c + x).powf(one_r) - c.powf(one_r)) / one_r)
            }
        }
        InnovationModel::DiscreteInteger(pmf) => {
            // Smooth between integers; constant past the largest atom.
            let top = T::from_usize_lossy(pmf.max_atom());
            let mut points = vec![T::zero()];
            let mut k = T::one();
            while k < x.min(top) {
                points.push(k);
                k = k + T::one();
            }
            points.push(x.min(top));
            let opts = QuadOptions::new(T::zero(), T::lit(1e-9));
            let body = integrate_pieces(|y| (-u_eps(model, y, eps)).exp(), &points, &opts)?;
            let flat = if x > top { (x - top) * (-u_eps(model, top, eps)).exp() } else { T::zero() };
            Ok(body + flat)
        }
        _ => {
            // Geometric breakpoints keep each piece well scaled for large x.
            let mut points = vec![T::zero()];
            let mut b = T::one();
            while b < x {
                points.push(b);
                b = b * T::lit(2.0);
            }
            points.push(x);
            let opts = QuadOptions::new(T::zero(), T::lit(1e-9));
            integrate_pieces(|y| (-u_eps(model, y, eps)).exp(), &points, &opts)
        }
    }
}

pub fn u0_integral<T: Real>(model: &InnovationModel<T>, x: T) -> Result<T> {
    ueps_integral(model, x, T::zero())
}

/// `κ(c) = 1/((1−c) B(c, 1−c)) = sin(πc)/((1−c)π)`.
pub fn kappa<T: Real>(c: T) -> Result<T> {
    if !(c > T::zero() && c < T::one()) {
        return Err(Error::Domain(format!("κ needs c ∈ (0, 1), got {c}")));
    }
    Ok((T::PI() * c).sin() / ((T::one() - c) * T::PI()))
}

/// `E W(s(η)) − W(z)` for `s(y) = log_A(A^{z−1} + A^y)` and increasing `W`.
///
/// Uses `E f(η) = f(0) + ∫_0^∞ f′(y) F̄(y) dy` (η ≥ 0), so only the smooth
/// derivative `W′(s(y)) s′(y)` is integrated.
fn one_step_drift<T, W, D>(model: &InnovationModel<T>, a: T, z: T, w: W, dw: D) -> Result<T>
where
    T: Real,
    W: Fn(T) -> Result<T>,
    D: Fn(T) -> T,
{
    if !(a > T::one()) {
        return Err(Error::InvalidParameter(format!("A must exceed 1, got {a}")));
    }
    if !(z >= T::zero()) {
        return Err(Error::Domain(format!("drift needs z ≥ 0, got {z}")));
    }
    let ln_a = a.ln();
    let drifted = z - T::one();
    let integrand = |y: T| {
        let s = step_ar_log(z, y, a);
        let slope = T::one() / (T::one() + ((drifted - y) * ln_a).exp());
        dw(s) * slope * model.tail(y)
    };
    let width = T::lit(60.0);
    let mut points = vec![T::zero()];
    for b in [drifted - width, drifted, drifted + width] {
        if b > *points.last().expect("nonempty") {
            points.push(b);
        }
    }
    let opts = QuadOptions::new(T::lit(1e-14), T::lit(1e-11));
    let body = integrate_pieces(integrand, &points, &opts)?;
    let tail = integrate_to_infinity(integrand, *points.last().expect("nonempty"), &opts)?;
    Ok(w(step_ar_log(z, T::zero(), a))? + body + tail - w(z)?)
}

/// One-step drift of `U₀ + U_ε` along the AR(1) chain at `log_A`-level `z`.
pub fn drift_residual<T: Real>(model: &InnovationModel<T>, a: T, z: T, eps: T) -> Result<T> {
    require_log_tail(model)?;
    check_eps(model, eps)?;
    one_step_drift(
        model,
        a,
        z,
        |s| Ok(u0_integral(model, s)? + ueps_integral(model, s, eps)?),
        |s| (-u_eps(model, s, T::zero())).exp() + (-u_eps(model, s, eps)).exp(),
    )
}

/// One-step drift of `U₀` alone; non-negative (submartingale).
pub fn drift_residual_u0<T: Real>(model: &InnovationModel<T>, a: T, z: T) -> Result<T> {
    require_log_tail(model)?;
    one_step_drift(model, a, z, |s| u0_integral(model, s), |s| (-u_eps(model, s, T::zero())).exp())
}

fn require_log_tail<T: Real>(model: &InnovationModel<T>) -> Result<T> {
    model
        .log_tail_index()
        .ok_or_else(|| Error::InvalidParameter("drift residuals are defined for the log-tail family".into()))
}

/// Smallest grid point from which [`drift_residual`] stays `≤ 0` through the
/// end of the (ascending) grid, if any.
pub fn scan_drift_threshold<T: Real>(model: &InnovationModel<T>, a: T, eps: T, z_grid: &[T]) -> Result<Option<T>> {
    let mut found = None;
    for &z in z_grid.iter().rev() {
        if drift_residual(model, a, z, eps)? <= T::zero() {
            found = Some(z);
        } else {
            break;
        }
    }
    Ok(found)
}

/// `c = 1/(2 Σ_{j≥1} j⁻²) = 3/π²`.
pub fn cj_constant<T: Real>() -> T {
    T::lit(3.0) / (T::PI() * T::PI())
}

/// `c_j(y) = P(ξ > A^j c y / (j+1)²)`, evaluated on the `η = log_A ξ` scale.
pub fn cj<T: Real>(model: &InnovationModel<T>, a: T, y: T, j: usize) -> T {
    let ln_a = a.ln();
    let jj = T::from_usize_lossy(j);
    let level = jj + (cj_constant::<T>() * y).ln() / ln_a - T::lit(2.0) * (jj + T::one()).ln() / ln_a;
    model.tail(level)
}

/// `C(y) = Σ_{j≥0} c_j(y)`, stopped once the additive remainder bound is
/// below `tol`.
///
/// Past `J` with `(J+1) ln A > 2` the levels `t_j` grow at least linearly with
/// slope `δ = 1 − 2/((J+1) ln A)`, so `Σ_{j≥J} F̄(t_j) ≤ F̄(t_J) + ∫_{t_J}^∞ F̄ / δ`.
pub fn c_big<T: Real>(model: &InnovationModel<T>, a: T, y: T, jmax: usize, tol: T) -> Result<T> {
    if !model.mean_upper().is_finite() {
        return Err(Error::Divergent("C(y) needs E η⁺ < ∞".into()));
    }
    if !(a > T::one()) || !(y > T::zero()) {
        return Err(Error::InvalidParameter(format!("need A > 1 and y > 0, got A = {a}, y = {y}")));
    }
    let ln_a = a.ln();
    let mut total = T::zero();
    for j in 0..=jmax {
        let jj = T::from_usize_lossy(j);
        let slope = T::one() - T::lit(2.0) / ((jj + T::one()) * ln_a);
        if slope > T::lit(0.5) {
            let level = jj + (cj_constant::<T>() * y).ln() / ln_a - T::lit(2.0) * (jj + T::one()).ln() / ln_a;
            let bound = model.tail(level) + model.integrated_tail(level) / slope;
            if bound < tol {
                return Ok(total + T::lit(0.5) * bound);
            }
        }
        total = total + cj(model, a, y, j);
    }
    Err(Error::NonConvergence(format!("C(y) remainder above {tol} after {jmax} terms")))
}

/// Quadrature cross-check of the log-tail closed form of `U_ε`.
pub fn ueps_by_quadrature<T: Real>(model: &InnovationModel<T>, x: T, eps: T) -> Result<T> {
    check_eps(model, eps)?;
    let opts = QuadOptions::new(T::zero(), T::lit(1e-11));
    Ok(integrate(|y| (-u_eps(model, y, eps)).exp(), T::zero(), x, &opts)?.value)
}

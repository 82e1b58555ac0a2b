//! Property checks that cut across modules. Deterministic checks use fixed
//! seeds; proptest covers the ones quantified over parameters.

use proptest::prelude::*;
use rand::RngCore;
use recurrence_core::chains::{self, step_ar_log, ChainKind};
use recurrence_core::exact_r::{self, cdf_grid, harmonic_table, tail_at, tail_table};
use recurrence_core::harness::{self, brute_force_tail, EmpiricalCdf};
use recurrence_core::innovations::ChainClassification;
use recurrence_core::rng::{open_unit, substream};
use recurrence_core::zlimit::{self, SpecialFnAccuracy};
use recurrence_core::{Config, Model, ZLaw};

fn families() -> Vec<Model> {
    vec![
        Model::log_tail(0.5).unwrap(),
        Model::log_tail(1.7).unwrap(),
        Model::shifted_pareto(2.0, 1.0).unwrap(),
        Model::weibull(0.5, 1.0).unwrap(),
        Model::log_normal(0.0, 1.0).unwrap(),
        Model::discrete(vec![0.5, 0.2, 0.1, 0.1, 0.1]).unwrap(),
    ]
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let s: f64 = weights.iter().sum();
    weights.iter().map(|w| w / s).collect()
}

/// Law on `{0, …, K}`, `K ≥ 1`, with a threshold `x₀ < K` so that both
/// `P(η ≤ x₀)` and `P(η > x₀)` are positive.
fn discrete_law() -> impl Strategy<Value = (Model, f64)> {
    prop::collection::vec(0.05f64..1.0, 2..7).prop_flat_map(|w| {
        let top = (w.len() - 1) as f64;
        (Just(Model::discrete(normalized(&w)).unwrap()), 0.0..top)
    })
}

// ---- innovations -----------------------------------------------------------

proptest! {
    #[test]
    fn tail_plus_cdf_is_one(y in 0.0f64..1e6) {
        for m in families() {
            prop_assert!((m.tail(y) + m.cdf(y) - 1.0).abs() <= 1e-14, "{m} at {y}");
        }
    }

    #[test]
    fn classification_depends_on_sign_of_c_minus_one(c in 0.01f64..5.0) {
        let class = Model::log_tail(c).unwrap().classify();
        let expected = if c < 1.0 {
            ChainClassification::NullRecurrent
        } else if c > 1.0 {
            ChainClassification::Transient
        } else {
            ChainClassification::CriticalUnresolved
        };
        prop_assert_eq!(class, expected);
    }
}

#[test]
fn quantile_and_cdf_are_galois_inverses() {
    let mut rng = substream(11, 0);
    for m in families() {
        for _ in 0..1000 {
            let u = open_unit(&mut rng);
            let q = m.quantile(u).unwrap();
            assert!(m.cdf(q) >= u - 1e-12, "{m}: F(Q({u})) = {} < u", m.cdf(q));
            // Generalized inverse: Q(F(y)) ≤ y, with equality off the flat parts of F.
            let y = m.quantile(open_unit(&mut rng)).unwrap();
            let fy = m.cdf(y);
            if fy > 0.0 && fy < 1.0 {
                let back = m.quantile(fy).unwrap();
                assert!(back <= y + 1e-9 * y.max(1.0), "{m}: Q(F({y})) = {back}");
                if !m.is_discrete() {
                    assert!((back - y).abs() <= 1e-6 * y.max(1.0), "{m}: Q(F({y})) = {back}");
                }
            }
        }
    }
}

#[test]
fn samples_match_cdf_in_ks() {
    let n = 100_000;
    for (i, m) in families().into_iter().enumerate() {
        let draws = harness::par_draws(1000 + i as u64, n, |rng| Ok(m.sample(rng))).unwrap();
        let ecdf = EmpiricalCdf::new(draws).unwrap();
        let d = harness::ks_distance_atoms(&ecdf, |y| m.cdf(y), |y| if y > 0.0 { m.cdf(y - 1e-9) } else { 0.0 });
        assert!(d < harness::ks_critical_99(n as usize), "{m}: KS {d}");
    }
}

// ---- chains ----------------------------------------------------------------

proptest! {
    #[test]
    fn ar_step_stays_within_log_two(l in -5.0f64..50.0, eta in 0.0f64..50.0, a in 1.01f64..20.0) {
        let s = step_ar_log(l, eta, a);
        let m = (l - 1.0).max(eta);
        prop_assert!(s >= m && s <= m + 2f64.ln() / a.ln() + 1e-12);
    }

    #[test]
    fn tail_estimates_are_non_increasing(seed in any::<u64>()) {
        let m = Model::log_tail(0.5).unwrap();
        let config = Config { a: 2.0, x0_log: 1.0, start_log: 1.5, horizon_cap: 200, master_seed: seed, replicates: 500 };
        let est = chains::estimate_tail(ChainKind::RandomExchange, &m, &config, &[1, 5, 20, 50, 200]).unwrap();
        prop_assert!(est.windows(2).all(|w| w[1].p_hat <= w[0].p_hat));
    }

    #[test]
    fn max_ar_and_random_exchange_hit_together(seed in any::<u64>(), start in 1.1f64..6.0) {
        let m = Model::shifted_pareto(1.5, 1.0).unwrap();
        let config = Config { a: 2.0, x0_log: 1.0, start_log: start, horizon_cap: 10_000, master_seed: seed, replicates: 1 };
        let r = chains::simulate_recurrence_time(ChainKind::RandomExchange, &m, &config, &mut substream(seed, 0));
        let x = chains::simulate_recurrence_time(ChainKind::MaxAr, &m, &config, &mut substream(seed, 0));
        prop_assert_eq!(r, x);
    }
}

#[test]
fn max_ar_below_ar_below_shifted_max_ar() {
    let m = Model::log_tail(0.5).unwrap();
    let a = 2.0f64;
    for path in 0..1000u64 {
        let mut rng = substream(5, path);
        let (mut lm, mut lx) = (3.0, 3.0);
        for k in 1..=1000u64 {
            let eta = m.sample(&mut rng);
            lm = chains::step(ChainKind::MaxAr, lm, eta, a);
            lx = chains::step(ChainKind::ArOne, lx, eta, a);
            assert!(lm <= lx + 1e-9, "path {path} step {k}");
            assert!(lx <= lm + ((k + 1) as f64).ln() / a.ln() + 1e-9, "path {path} step {k}");
        }
    }
}

#[test]
fn estimates_do_not_depend_on_pool_size() {
    let m = Model::weibull(0.5, 1.0).unwrap();
    let config = Config { a: 2.0, x0_log: 2.0, start_log: 2.5, horizon_cap: 100, master_seed: 99, replicates: 20_000 };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| chains::estimate_tail(ChainKind::ArOne, &m, &config, &[1, 10, 100]).unwrap())
    };
    assert_eq!(run(1), run(5));
}

// ---- exact recursions ------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursion_matches_brute_force((m, x0) in discrete_law(), k in 0usize..5) {
        let table = tail_table(&cdf_grid(&m, x0, 20).unwrap(), 12).unwrap();
        let start = x0 + k as f64 + 0.5;
        for n in 0..=12 {
            let dp = brute_force_tail(&m, x0, start, n).unwrap();
            prop_assert!((tail_at(&table, n, k).unwrap() - dp).abs() <= 1e-12);
        }
    }

    #[test]
    fn harmonic_differences_are_products((m, x0) in discrete_law()) {
        let grid = cdf_grid(&m, x0, 40).unwrap();
        let g = harmonic_table(&grid, 30);
        let pi = grid.products(31);
        for n in 0..30 {
            let diff = g.values()[n + 1] - g.values()[n];
            prop_assert!((diff - pi[n + 1]).abs() <= 4.0 * f64::EPSILON * g.values()[n + 1]);
        }
    }
}

proptest! {
    // Each case builds an O(n²) table of up to 64k cells.
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn expectation_is_summed_tail((m, x0) in discrete_law(), k in 0usize..4) {
        // Grow the table until the geometric remainder bound drops below 1e-9.
        let mut nmax = 1000;
        let (grid, table) = loop {
            let grid = cdf_grid(&m, x0, nmax).unwrap();
            let table = tail_table(&grid, nmax).unwrap();
            let v = table.v();
            let r = v[nmax] / v[nmax - 1];
            if r < 1.0 && v[nmax] * r / (1.0 - r) < 1e-9 || nmax >= 64_000 {
                break (grid, table);
            }
            nmax *= 2;
        };
        let start = x0 + k as f64 + 0.5;
        let summed: f64 = (0..=nmax).map(|n| tail_at(&table, n, k).unwrap()).sum();
        let exact = exact_r::expected_t_exact(&grid, start).unwrap();
        prop_assert!((exact - summed).abs() <= 1e-8, "{exact} vs {summed}");
    }
}

#[test]
fn log_tail_products_are_regularly_varying() {
    for c in [0.3, 0.5, 0.7] {
        let m = Model::log_tail(c).unwrap();
        let grid = cdf_grid(&m, 1.0, 20_000).unwrap();
        let pi = grid.products(20_000);
        let (a, b) = (pi[10_000] * 1e4f64.powf(c), pi[20_000] * 2e4f64.powf(c));
        assert!((b / a - 1.0).abs() < 0.01, "c = {c}: {a} vs {b}");
    }
}

#[test]
fn u0_is_increasing_concave_and_regularly_varying() {
    for c in [0.3, 0.5, 0.7] {
        let m = Model::log_tail(c).unwrap();
        let xs: Vec<f64> = (1..200).map(|i| i as f64 * 0.25).collect();
        let u: Vec<f64> = xs.iter().map(|&x| exact_r::u0_integral(&m, x).unwrap()).collect();
        assert!(u.windows(2).all(|w| w[1] > w[0]));
        assert!(u.windows(3).all(|w| w[2] - w[1] <= w[1] - w[0] + 1e-12));
        let r = exact_r::u0_integral(&m, 2e6).unwrap() / exact_r::u0_integral(&m, 1e6).unwrap();
        assert!((r / 2f64.powf(1.0 - c) - 1.0).abs() < 0.01, "c = {c}: {r}");
    }
}

// ---- limit process ---------------------------------------------------------

proptest! {
    #[test]
    fn incomplete_beta_reflection(x in 0.0f64..=1.0, a in 0.05f64..20.0, b in 0.05f64..20.0) {
        let acc = SpecialFnAccuracy::default();
        let s = zlimit::reg_inc_beta(x, a, b, &acc).unwrap() + zlimit::reg_inc_beta(1.0 - x, b, a, &acc).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn t0_tail_monotone(c in 0.05f64..0.95, z in 0.01f64..10.0, t in 0.01f64..50.0, dz in 0.0f64..5.0, dt in 0.0f64..50.0) {
        let p = ZLaw::new(c).unwrap();
        let acc = SpecialFnAccuracy::default();
        let base = zlimit::t0_tail(&p, z, t, &acc).unwrap();
        prop_assert!(zlimit::t0_tail(&p, z, t + dt, &acc).unwrap() <= base + 1e-12);
        prop_assert!(zlimit::t0_tail(&p, z + dz, t, &acc).unwrap() >= base - 1e-12);
        if t <= z {
            prop_assert_eq!(base, 1.0);
        }
    }
}

#[test]
fn chapman_kolmogorov() {
    let n = 100_000u64;
    for &x in &[0.0, 1.0] {
        for &t in &[0.5, 2.0] {
            for &c in &[0.3, 0.7] {
                let p = ZLaw::new(c).unwrap();
                let seed = (x as u64) * 100 + (t * 10.0) as u64 + (c * 1000.0) as u64;
                let draws = harness::par_draws(seed, n, |rng| {
                    let mid = zlimit::z_step_sample(&p, x, t / 2.0, open_unit(rng));
                    Ok(zlimit::z_step_sample(&p, mid, t / 2.0, open_unit(rng)))
                })
                .unwrap();
                let d = harness::ks_distance_atoms(
                    &EmpiricalCdf::new(draws).unwrap(),
                    |y| zlimit::z_transition_cdf(&p, x, t, y),
                    |y| zlimit::z_transition_cdf_left(&p, x, t, y),
                );
                assert!(d < harness::ks_critical_99(n as usize), "x={x} t={t} c={c}: KS {d}");
            }
        }
    }
}

#[test]
fn moment_identity() {
    // Var[Z_t^{1−c}] < ∞ needs c > 2/3.
    let c = 0.8;
    let p = ZLaw::new(c).unwrap();
    let n = 100_000u64;
    for &(x, t) in &[(1.0, 0.5), (1.0, 2.0), (0.0, 1.0)] {
        let draws = harness::par_draws(77, n, |rng| Ok(zlimit::z_step_sample(&p, x, t, open_unit(rng)).powf(1.0 - c))).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = f64::max(t, x).powf(1.0 - c);
        assert!((mean - want).abs() <= 3.0 * (var / n as f64).sqrt(), "x={x} t={t}: {mean} vs {want}");
    }
}

#[test]
fn t0_sampler_and_exp_functional_agree() {
    let n = 100_000u64;
    for c in [0.3, 0.5, 0.7] {
        let p = ZLaw::new(c).unwrap();
        let a = harness::par_draws(1, n, |rng| zlimit::sample_t0(&p, 1.0, rng)).unwrap();
        let b = harness::par_draws(2, n, |rng| Ok(zlimit::sample_exp_functional(&p, rng, 1e-12))).unwrap();
        let d = harness::ks_two_sample(&EmpiricalCdf::new(a).unwrap(), &EmpiricalCdf::new(b).unwrap());
        assert!(d < harness::ks_critical_99_two(n as usize, n as usize), "c = {c}: KS {d}");
    }
}

// ---- harness ---------------------------------------------------------------

#[test]
fn records_rerun_from_their_parameter_echo() {
    use harness::{ExperimentName, ExperimentSpec};
    let mut spec = ExperimentSpec::defaults(ExperimentName::OracleSuite);
    spec.replicates = 5_000;
    let first = harness::run_experiment(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    harness::write_json(&first, &path).unwrap();
    let echoed = harness::read_json(&path).unwrap();
    let again = harness::run_experiment(&echoed.params).unwrap();
    assert_eq!(harness::csv_string(&first).unwrap(), harness::csv_string(&again).unwrap());
    assert!(first.verdict, "{first:?}");
}

#[test]
fn substreams_are_independent_of_order() {
    let forward: Vec<u64> = (0..8).map(|i| substream(3, i).next_u64()).collect();
    let backward: Vec<u64> = (0..8).rev().map(|i| substream(3, i).next_u64()).collect();
    assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
}

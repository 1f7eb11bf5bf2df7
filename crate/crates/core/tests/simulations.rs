//! Monte Carlo checks against known truths: power and coverage of the
//! falsification tests, validity of randomization inference, consistency
//! of the effect estimators.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rdx::extrapolation::{
    estimate_cutoff_effect, extrapolate_polybias, extrapolation_grid, linspace, pooled_effect,
};
use rdx::falsification::{global_parallel_test, local_derivative_test, DerivGrid};
use rdx::fixedeffects::slope_equality_test;
use rdx::localrand::{
    bergerboos_pvalue, lr_estimate, lr_sensitivity, Adjustment, LRConfig, Permutations,
};
use rdx::simulate::{generate_sample, SimulationConfig};
use rdx::{CutoffPair, Dataset, Design, FitSpec, Observation};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two groups below a low cutoff at 0 (high cutoff 100), control function
/// `f(x)` plus `slope_gap * x` for the high group, noise sd `sigma`.
fn controls(seed: u64, n: usize, sigma: f64, slope_gap: f64, f: impl Fn(f64) -> f64) -> Dataset {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let obs = (0..n)
        .map(|i| {
            let high = i % 2 == 1;
            let x: f64 = r.random_range(-100.0..0.0);
            let gap = if high { 0.3 + slope_gap * x } else { 0.0 };
            Observation::sharp(
                f(x) + gap + noise.sample(&mut r),
                x,
                if high { 100.0 } else { 0.0 },
            )
        })
        .collect();
    Dataset::new(obs, Design::Sharp).unwrap()
}

#[test]
fn global_test_has_power_against_diverging_slopes() {
    // sd(x) of a uniform on a width-100 interval
    let sd_x = 100.0 / 12f64.sqrt();
    let reps = 100;
    let rejections = (0..reps)
        .filter(|&s| {
            let ds = controls(s, 5000, 1.0, 0.1 / sd_x, |x| {
                0.5 + 0.01 * x + 0.0001 * x * x
            });
            let pair = CutoffPair::new(&ds, 0.0, 100.0).unwrap();
            global_parallel_test(&ds, &pair, 2, false).unwrap().p_value < 0.05
        })
        .count();
    assert!(rejections as u64 > reps / 2, "{rejections} of {reps}");
}

#[test]
fn derivative_intervals_cover_zero_under_the_null() {
    let reps = 150;
    let mut covered = 0;
    let mut total = 0;
    let mut per_point = vec![0usize; 10];
    for s in 0..reps {
        let ds = controls(1000 + s, 2000, 0.5, 0.0, |x| 1.0 + 0.02 * x);
        let pair = CutoffPair::new(&ds, 0.0, 100.0).unwrap();
        let r =
            local_derivative_test(&ds, &pair, &DerivGrid::Auto, &FitSpec::new(2), 0.95).unwrap();
        for (j, o) in r.grid.iter().enumerate() {
            let p = o.point.as_ref().expect("grid point failed");
            total += 1;
            if p.ci_rbc.contains(0.0) {
                covered += 1;
                per_point[j] += 1;
            }
        }
    }
    let rate = covered as f64 / total as f64;
    assert!((0.92..=0.98).contains(&rate), "pooled coverage {rate}");
    for c in per_point {
        assert!(
            c as f64 / reps as f64 >= 0.86,
            "pointwise coverage {c}/{reps}"
        );
    }
}

#[test]
fn slope_test_detects_a_five_se_difference() {
    let mut r = rng(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n = 2000;
    let xs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { -20.0 } else { 30.0 };
            (c, r.random_range(-100.0..100.0))
        })
        .collect();
    // control slopes use the rows below each cutoff; five times the se of
    // their difference under unit noise
    let sxx = |c: f64| {
        let v: Vec<f64> = xs
            .iter()
            .filter(|(cc, x)| *cc == c && *x < c)
            .map(|p| p.1 - c)
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let gap = 5.0 * (1.0 / sxx(-20.0) + 1.0 / sxx(30.0)).sqrt();
    let obs = xs
        .iter()
        .map(|&(c, x)| {
            let slope = if c > 0.0 { 0.01 + gap } else { 0.01 };
            let d = f64::from(u8::from(x >= c));
            Observation::sharp(
                slope * (x - c) + d * (0.2 + 0.002 * (x - c)) + noise.sample(&mut r),
                x,
                c,
            )
        })
        .collect();
    let t = slope_equality_test(&Dataset::new(obs, Design::Sharp).unwrap()).unwrap();
    assert!(t.p_value < 0.01, "p {}", t.p_value);
}

/// Local randomization holds exactly: flat outcomes with iid noise, the low
/// group shifted by `delta`, its treated units by `tau` more. Low cutoff 0,
/// high cutoff 100.
fn randomized(seed: u64, n: usize, delta: f64, tau: f64) -> Dataset {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let obs = (0..n)
        .map(|i| {
            let low = i % 2 == 0;
            let x: f64 = r.random_range(-100.0..200.0);
            let c = if low { 0.0 } else { 100.0 };
            let shift = if low {
                delta + if x >= 0.0 { tau } else { 0.0 }
            } else {
                0.0
            };
            Observation::sharp(1.0 + shift + noise.sample(&mut r), x, c)
        })
        .collect();
    Dataset::new(obs, Design::Sharp).unwrap()
}

#[test]
fn bergerboos_p_value_is_valid_under_the_null() {
    let reps = 1000;
    let cfg = LRConfig {
        eta: 0.01,
        perms: Permutations::Random(500),
        grid: 10,
        seed: 3,
    };
    let p: Vec<Option<f64>> = (0..reps)
        .map(|s| {
            let ds = randomized(s, 1200, -0.14, 0.0);
            let pair = CutoffPair::new(&ds, 0.0, 100.0).unwrap();
            // a window can rarely hold fewer than two units of a cell
            bergerboos_pvalue(&ds, &pair, 50.0, 40, Adjustment::Constant, &cfg)
                .ok()
                .map(|b| b.p_star)
        })
        .collect();
    assert!(p.iter().filter(|v| v.is_none()).count() <= 5);
    let rejections = p.iter().flatten().filter(|&&v| v <= 0.05).count();
    // one-sided binomial bound at level 0.01 for a true rate of 0.05
    let bound = 0.05 * reps as f64 + 2.33 * (reps as f64 * 0.05 * 0.95).sqrt();
    assert!(
        (rejections as f64) <= bound,
        "{rejections} rejections of {reps}"
    );
}

#[test]
fn local_randomization_estimates_are_unbiased() {
    let (delta, tau) = (-0.14, 0.19);
    let reps = 400;
    let draws: Vec<(f64, f64)> = (0..reps)
        .map(|s| {
            let ds = randomized(10_000 + s, 600, delta, tau);
            let pair = CutoffPair::new(&ds, 0.0, 100.0).unwrap();
            let r = lr_estimate(&ds, &pair, 50.0, 40, Adjustment::Constant).unwrap();
            (r.delta_hat, r.tau_hat)
        })
        .collect();
    let check = |vals: Vec<f64>, truth: f64| {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            (m - truth).abs() < 3.0 * sd / n.sqrt(),
            "mean {m} truth {truth} sd {sd}"
        );
    };
    check(draws.iter().map(|d| d.0).collect(), delta);
    check(draws.iter().map(|d| d.1).collect(), tau);
}

#[test]
fn linear_adjustment_is_stable_across_window_sizes() {
    // averaged over replications; a single sample's estimate has an se near
    // 0.15 at k = 30
    let ks = [30, 40, 50, 60, 70, 80];
    let reps = 200;
    let cfg = SimulationConfig::with_n(5000);
    let mut sums = vec![0.0; ks.len()];
    let lr_cfg = LRConfig {
        perms: Permutations::Random(500),
        grid: 2,
        ..LRConfig::default()
    };
    for s in 0..reps {
        let ds = generate_sample(&cfg, s).unwrap();
        let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).unwrap();
        let rows = lr_sensitivity(&ds, &pair, cfg.xbar, &ks, Adjustment::Linear, &lr_cfg).unwrap();
        for (sum, row) in sums.iter_mut().zip(rows) {
            *sum += row.result.expect("window failed").tau_hat;
        }
    }
    for (k, sum) in ks.iter().zip(sums) {
        let mean = sum / reps as f64;
        assert!((mean - cfg.tau).abs() < 0.05, "k {k}: mean {mean}");
    }
}

#[test]
fn pooled_effect_recovers_a_common_jump() {
    let mut r = rng(9);
    // noise small enough that 0.02 is several standard errors
    let noise = Normal::new(0.0, 0.1).unwrap();
    let obs: Vec<Observation> = (0..20_000)
        .map(|i| {
            let c = if i % 2 == 0 { -40.0 } else { 60.0 };
            let u: f64 = r.random_range(-100.0..100.0);
            let y = 0.4 + 0.003 * u - 0.00001 * u * u + if u >= 0.0 { 0.3 } else { 0.0 };
            Observation::sharp(y + noise.sample(&mut r), c + u, c)
        })
        .collect();
    let ds = Dataset::new(obs, Design::Sharp).unwrap();
    let pooled = pooled_effect(&ds, &FitSpec::new(1), 0.95).unwrap();
    assert!((pooled.tau - 0.3).abs() < 0.02, "pooled {}", pooled.tau);
    for &c in ds.cutoffs() {
        let e = estimate_cutoff_effect(&ds, c, &FitSpec::new(1), 0.95).unwrap();
        assert!(
            (e.tau - 0.3).abs() < 3.0 * e.se_rbc.max(0.01),
            "cutoff {c}: {}",
            e.tau
        );
    }
}

#[test]
fn grid_estimates_are_near_the_simulated_truth() {
    let cfg = SimulationConfig::with_n(5000);
    let ds = generate_sample(&cfg, 21).unwrap();
    let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).unwrap();
    let grid = extrapolation_grid(
        &ds,
        &pair,
        &linspace(-840.0, -580.0, 14),
        &FitSpec::new(1),
        0.95,
    )
    .unwrap();
    for g in grid {
        let r = g.result.expect("grid point failed");
        assert!(
            (r.tau - cfg.tau).abs() < 3.0 * r.se_rbc,
            "xbar {}: {} (se {})",
            r.xbar,
            r.tau,
            r.se_rbc
        );
    }
}

#[test]
fn near_noiseless_run_is_close_to_truth() {
    let cfg = SimulationConfig {
        sigma: 1e-12,
        ..SimulationConfig::with_n(5000)
    };
    let ds = generate_sample(&cfg, 0).unwrap();
    let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).unwrap();
    let r = rdx::extrapolation::extrapolate_sharp(&ds, &pair, cfg.xbar, &FitSpec::new(1), 0.95)
        .unwrap();
    assert!((r.tau - cfg.tau).abs() < 0.01, "tau {}", r.tau);
    assert!((r.bias_low - cfg.delta).abs() < 0.01, "bias {}", r.bias_low);
}

#[test]
fn bias_slope_vanishes_with_parallel_controls() {
    let spread = |n: usize| {
        let reps = 20;
        let cfg = SimulationConfig::with_n(n);
        let (mut slope, mut gap) = (0.0, 0.0);
        for s in 0..reps {
            let ds = generate_sample(&cfg, s).unwrap();
            let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).unwrap();
            let r0 = extrapolate_polybias(&ds, &pair, cfg.xbar, &FitSpec::new(1), 0, 0.95).unwrap();
            let r1 = extrapolate_polybias(&ds, &pair, cfg.xbar, &FitSpec::new(1), 1, 0.95).unwrap();
            slope += r1.bias_derivatives[1].abs();
            gap += (r1.tau - r0.tau).abs();
        }
        (slope / reps as f64, gap / reps as f64)
    };
    let (slope_small, gap_small) = spread(2000);
    let (slope_large, gap_large) = spread(20_000);
    assert!(slope_large < slope_small, "{slope_large} vs {slope_small}");
    assert!(gap_large < gap_small, "{gap_large} vs {gap_small}");
}

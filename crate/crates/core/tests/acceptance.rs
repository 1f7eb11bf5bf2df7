//! Acceptance criteria, one PASS/FAIL line each. Runs without the test
//! harness so the lines are always printed; exits nonzero on any failure.

mod common;

use std::process::Command;

use common::{
    curved_sample, exhaustive_oracle, intercept_weights, nn_variance_oracle, ols, six_row_fixture,
    triangular, two_groups,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rdx::extrapolation::{extrapolate_fuzzy, extrapolate_polybias, extrapolate_sharp, linspace};
use rdx::falsification::global_parallel_test;
use rdx::fixedeffects::slope_equality_test;
use rdx::localrand::{bergerboos_pvalue, randomization_pvalue, Adjustment, LRConfig, Permutations};
use rdx::locfit::fit_with_bandwidth;
use rdx::output::to_json;
use rdx::simulate::{
    generate_sample, run_monte_carlo, Estimator, SimulationConfig, SimulationSummary,
};
use rdx::{
    fit_covariance, local_fit, rbc_interval, CutoffPair, Dataset, Design, FitSpec, KernelKind,
    Observation,
};

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn monte_carlo(n: usize) -> SimulationSummary {
    let cfg = SimulationConfig {
        reps: 1000,
        seed: 1,
        ..SimulationConfig::with_n(n)
    };
    run_monte_carlo(&cfg, Estimator::Sharp, &FitSpec::new(1)).expect("monte carlo")
}

fn coverage_and_accuracy(r: &mut Report) {
    let bands = [(1000, 0.88, 0.94), (2000, 0.89, 0.95), (5000, 0.91, 0.965)];
    let runs: Vec<SimulationSummary> = bands.iter().map(|b| monte_carlo(b.0)).collect();
    for (s, &(n, lo, hi)) in runs.iter().zip(&bands) {
        r.check(
            &format!("1 coverage N={n}"),
            (lo..=hi).contains(&s.coverage_rbc) && s.reps_failed == 0,
            format!(
                "RBC coverage {:.3} in [{lo}, {hi}] over {} reps ({} failed)",
                s.coverage_rbc, s.reps_completed, s.reps_failed
            ),
        );
    }
    for s in &runs[..2] {
        println!(
            "     N={}: mean {:.4}, bias {:.4}, sd {:.4}",
            s.n, s.mean_tau_hat, s.bias, s.sd
        );
    }
    let s = &runs[2];
    r.check(
        "2 accuracy N=5000",
        (s.mean_tau_hat - 0.19).abs() <= 0.01 && s.bias.abs() < s.sd / 3.0,
        format!(
            "mean {:.4} (0.19 +- 0.01), |bias| {:.4} < sd/3 = {:.4}",
            s.mean_tau_hat,
            s.bias.abs(),
            s.sd / 3.0
        ),
    );
}

fn exactness(r: &mut Report) {
    let (low, high) = (-50.0, 50.0);
    let (a, b, delta, t0, t1) = (0.4, 0.006, -0.14, 0.19, 0.002);
    let ds = two_groups(200, low, high, -150.0, 150.0, |x, c| {
        let base = a + b * x;
        if c == low {
            base + delta + if x >= low { t0 + t1 * (x - low) } else { 0.0 }
        } else {
            base + if x >= high { 0.5 } else { 0.0 }
        }
    });
    let pair = CutoffPair::new(&ds, low, high).unwrap();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for xbar in linspace(-45.0, 45.0, 10) {
        match extrapolate_sharp(&ds, &pair, xbar, &FitSpec::new(1), 0.95) {
            Ok(e) => worst = worst.max((e.tau - (t0 + t1 * (xbar - low))).abs()),
            Err(_) => failures += 1,
        }
    }
    r.check(
        "3 parallel-linear exactness",
        failures == 0 && worst < 1e-8,
        format!("max error {worst:.2e} over 10 points, {failures} failures"),
    );
}

fn oracles(r: &mut Report) {
    // (a) uniform kernel over the full range is global least squares
    let s = curved_sample(150);
    let mut worst = 0.0f64;
    for p in 1..=3 {
        let design: Vec<Vec<f64>> = s
            .x()
            .iter()
            .map(|&v| (0..=p).map(|j| v.powi(j as i32)).collect())
            .collect();
        let coef = ols(&design, s.y());
        for x0 in [-2.5, -0.7, 0.0, 1.3, 2.9] {
            let spec = FitSpec::new(p).kernel(KernelKind::Uniform).bandwidth(8.0);
            let fit = local_fit(&s, &spec, x0).unwrap();
            let pred: f64 = (0..=p).map(|j| coef[j] * x0.powi(j as i32)).sum();
            worst = worst.max((fit.estimate - pred).abs());
        }
    }
    r.check(
        "4a global OLS oracle",
        worst < 1e-8,
        format!("max error {worst:.2e}"),
    );

    // (b) the robust estimate is the order p + 1 fit at the same bandwidth
    let s = curved_sample(300);
    let exact = [(1, 0.3, 1.2), (2, -1.0, 2.0), (1, 2.5, 0.9)]
        .iter()
        .all(|&(p, x0, h)| {
            let fit = fit_with_bandwidth(&s, &FitSpec::new(p), x0, h).unwrap();
            let rbc = rbc_interval(&fit, &s, 0.95).unwrap();
            let direct = fit_with_bandwidth(&s, &FitSpec::new(p + 1), x0, h).unwrap();
            rbc.rbc_estimate == direct.estimate
        });
    r.check(
        "4b RBC equals order p+1 fit",
        exact,
        "bitwise equality at 3 points".into(),
    );

    // (c) covariance by brute-force weight sums
    let x: Vec<f64> = (0..20).map(|i| i as f64 + 0.013 * (i * i) as f64).collect();
    let y: Vec<f64> = (0..20)
        .map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64)
        .collect();
    let s = rdx::Sample::from_xy(x.clone(), y.clone());
    let sigma2 = nn_variance_oracle(&x, &y);
    let (xa, ha, xb, hb) = (8.0, 6.5, 12.0, 7.25);
    let fa = fit_with_bandwidth(&s, &FitSpec::new(1), xa, ha).unwrap();
    let fb = fit_with_bandwidth(&s, &FitSpec::new(1), xb, hb).unwrap();
    let weights = |x0: f64, h: f64| {
        let kw: Vec<f64> = x.iter().map(|&v| triangular((v - x0) / h)).collect();
        intercept_weights(&x, x0, 1, &kw)
    };
    let (wa, wb) = (weights(xa, ha), weights(xb, hb));
    let cov: f64 = (0..20).map(|i| wa[i] * wb[i] * sigma2[i]).sum();
    let err = (fit_covariance(&fa, &fb).unwrap() - cov).abs();
    r.check(
        "4c covariance oracle",
        err < 1e-12,
        format!("error {err:.2e} (covariance {cov:.4e})"),
    );

    // (d) Berger-Boos grid against all 2^6 labelings
    let ds = six_row_fixture();
    let pair = CutoffPair::new(&ds, 0.0, 10.0).unwrap();
    let cfg = LRConfig {
        eta: 0.01,
        perms: Permutations::Exhaustive,
        grid: 9,
        seed: 0,
    };
    let bb = bergerboos_pvalue(&ds, &pair, 5.0, 6, Adjustment::Constant, &cfg).unwrap();
    let (y_low, y_high) = ([1.13, 0.92, 1.31], [0.88, 1.07, 0.79]);
    let matches = bb
        .grid
        .iter()
        .zip(&bb.p_values)
        .all(|(&d, &p)| p == exhaustive_oracle(&y_low, &y_high, d));
    let sup = bb
        .grid
        .iter()
        .map(|&d| exhaustive_oracle(&y_low, &y_high, d))
        .fold(0.0, f64::max);
    r.check(
        "4d Berger-Boos exhaustive",
        matches && bb.p_star == sup + cfg.eta,
        format!("{} grid points, p* {:.4}", bb.grid.len(), bb.p_star),
    );
}

/// Controls below a low cutoff at 0 (high cutoff 100) sharing one quadratic.
fn parallel_controls(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let obs = (0..n)
        .map(|i| {
            let high = i % 2 == 1;
            let x: f64 = rng.random_range(-100.0..0.0);
            let y = 0.5 + 0.01 * x + 0.0001 * x * x + if high { 0.3 } else { 0.0 };
            Observation::sharp(
                y + noise.sample(&mut rng),
                x,
                if high { 100.0 } else { 0.0 },
            )
        })
        .collect();
    Dataset::new(obs, Design::Sharp).unwrap()
}

/// Two cutoffs with equal control slopes and different jumps.
fn equal_slopes(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let obs = (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { -20.0 } else { 30.0 };
            let x: f64 = rng.random_range(-100.0..100.0);
            let d = f64::from(u8::from(x >= c));
            let y = 0.01 * (x - c) + 0.1 * (c / 10.0) + d * (0.2 + 0.002 * (x - c));
            Observation::sharp(y + noise.sample(&mut rng), x, c)
        })
        .collect();
    Dataset::new(obs, Design::Sharp).unwrap()
}

/// Low cutoff 0, high cutoff 10, `xbar = 5`: four units of each group near
/// each point. `low_at_xbar` picks which units near `xbar` belong to the low
/// group. Adjusted outcomes equal `v` whatever the labels, so the null of
/// no effect holds with `delta` known.
fn labeled_window(low_at_xbar: &[bool], delta: f64) -> Dataset {
    let v = [1.13, 0.92, 1.31, 0.88, 1.07, 0.79, 1.22, 0.97];
    let mut obs: Vec<Observation> = (0..8)
        .map(|i| {
            let c = if i % 2 == 0 { 0.0 } else { 10.0 };
            Observation::sharp(0.5 + 0.07 * i as f64, -0.4 + 0.1 * i as f64, c)
        })
        .collect();
    for (i, &low) in low_at_xbar.iter().enumerate() {
        let x = 4.65 + 0.1 * i as f64;
        let (y, c) = if low {
            (v[i], 0.0)
        } else {
            (v[i] - delta, 10.0)
        };
        obs.push(Observation::sharp(y, x, c));
    }
    Dataset::new(obs, Design::Sharp).unwrap()
}

fn test_size(r: &mut Report) {
    let seeds = 2000u64;
    let rate = |p: Vec<f64>| p.iter().filter(|&&v| v < 0.05).count() as f64 / p.len() as f64;
    let global: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let ds = parallel_controls(s, 1000);
            let pair = CutoffPair::new(&ds, 0.0, 100.0).unwrap();
            global_parallel_test(&ds, &pair, 2, false).unwrap().p_value
        })
        .collect();
    let g = rate(global);
    r.check(
        "5 global test size",
        (0.035..=0.065).contains(&g),
        format!("rejection rate {g:.4} over {seeds} seeds"),
    );
    let slopes: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            slope_equality_test(&equal_slopes(100_000 + s, 1000))
                .unwrap()
                .p_value
        })
        .collect();
    let s = rate(slopes);
    r.check(
        "5 slope test size",
        (0.035..=0.065).contains(&s),
        format!("rejection rate {s:.4} over {seeds} seeds"),
    );

    // every assignment of four of the eight units near xbar to the low group
    let delta = -0.14;
    let mut p_values = Vec::new();
    for mask in (0u32..256).filter(|m| m.count_ones() == 4) {
        let labels: Vec<bool> = (0..8).map(|i| mask >> i & 1 == 1).collect();
        let ds = labeled_window(&labels, delta);
        let pair = CutoffPair::new(&ds, 0.0, 10.0).unwrap();
        let p = randomization_pvalue(
            &ds,
            &pair,
            5.0,
            8,
            Adjustment::Constant,
            delta,
            Permutations::Exhaustive,
            0,
        )
        .expect("window");
        p_values.push(p);
    }
    let total = p_values.len();
    let worst = [0.05, 0.1, 0.2, 0.3, 0.5]
        .iter()
        .map(|&a| p_values.iter().filter(|&&p| p <= a).count() as f64 / total as f64 - a)
        .fold(f64::NEG_INFINITY, f64::max);
    r.check(
        "5 randomization test exact",
        worst <= 0.0,
        format!("max P[p <= a] - a = {worst:.4} over {total} assignments"),
    );
}

fn fuzzy(r: &mut Report) {
    let cfg = SimulationConfig::with_n(5000);
    let sharp = generate_sample(&cfg, 3).unwrap();
    let obs: Vec<Observation> = sharp
        .observations()
        .iter()
        .map(|o| Observation::new(o.y, o.x, o.c, u8::from(o.assigned())))
        .collect();
    let full = Dataset::new(obs, Design::Fuzzy).unwrap();
    let pair = CutoffPair::new(&sharp, cfg.ell, cfg.high).unwrap();
    let a = extrapolate_sharp(&sharp, &pair, cfg.xbar, &FitSpec::new(1), 0.95).unwrap();
    let b = extrapolate_fuzzy(&full, &pair, cfg.xbar, &FitSpec::new(1), 0.95).unwrap();
    let same = [
        (a.tau, b.tau),
        (a.se, b.se),
        (a.tau_rbc, b.tau_rbc),
        (a.se_rbc, b.se_rbc),
    ]
    .iter()
    .all(|(x, y)| x.to_bits() == y.to_bits());
    r.check(
        "6 full-compliance fuzzy equals sharp",
        same,
        format!("tau {} vs {}", a.tau, b.tau),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, cfg.sigma).unwrap();
    let obs: Vec<Observation> = (0..20_000)
        .map(|i| {
            let low = i % 2 == 0;
            let c = if low { cfg.ell } else { cfg.high };
            let x = rng.random_range(-1000.0..-1.0);
            let d = x >= c && rng.random_bool(0.6);
            let y = cfg.mu0_high(x)
                + if low { cfg.delta } else { 0.0 }
                + if d { cfg.tau } else { 0.0 }
                + noise.sample(&mut rng);
            Observation::new(y, x, c, u8::from(d))
        })
        .collect();
    let ds = Dataset::new(obs, Design::Fuzzy).unwrap();
    let f = extrapolate_fuzzy(&ds, &pair, cfg.xbar, &FitSpec::new(1), 0.95).unwrap();
    r.check(
        "6 complier effect n=20000",
        (f.tau_rbc - cfg.tau).abs() < 3.0 * f.se_rbc,
        format!(
            "RBC {:.4} (se {:.4}), conventional {:.4}, truth {}",
            f.tau_rbc, f.se_rbc, f.tau, cfg.tau
        ),
    );
}

fn polybias(r: &mut Report) {
    let (low, high, slope, xbar, tau) = (-850.0, -571.0, 0.0005, -700.0, 0.2);
    let reps = 200u64;
    let draws: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(50_000 + s);
            let noise = Normal::new(0.0, 0.1).unwrap();
            let obs: Vec<Observation> = (0..5000)
                .map(|i| {
                    let is_low = i % 2 == 0;
                    let c = if is_low { low } else { high };
                    let x: f64 = rng.random_range(-1000.0..-1.0);
                    let gap = if is_low {
                        -0.1 + slope * (x - low)
                    } else {
                        0.0
                    };
                    let y = 0.5 + 0.001 * x + gap + if x >= c { tau } else { 0.0 };
                    Observation::sharp(y + noise.sample(&mut rng), x, c)
                })
                .collect();
            let ds = Dataset::new(obs, Design::Sharp).unwrap();
            let pair = CutoffPair::new(&ds, low, high).unwrap();
            let est = |s_max| {
                extrapolate_polybias(&ds, &pair, xbar, &FitSpec::new(1), s_max, 0.95)
                    .unwrap()
                    .tau
            };
            (est(0), est(1))
        })
        .collect();
    let stats = |v: Vec<f64>| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m - tau, sd / n.sqrt())
    };
    let predicted = slope * (xbar - low);
    let (b0, se0) = stats(draws.iter().map(|d| d.0).collect());
    let (b1, se1) = stats(draws.iter().map(|d| d.1).collect());
    r.check(
        "7 constant-bias error matches prediction",
        (b0 - predicted).abs() < 3.0 * se0,
        format!("bias {b0:.4} vs predicted {predicted:.4} (sim se {se0:.4})"),
    );
    r.check(
        "7 first-order correction removes it",
        b1.abs() < 3.0 * se1,
        format!("bias {b1:.4} (sim se {se1:.4})"),
    );
}

fn rdx(args: &[&str], threads: &str) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_rdx"))
        .args(args)
        .env("RDX_THREADS", threads)
        .output()
        .expect("binary runs");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o.stdout
}

fn determinism(r: &mut Report) {
    let cfg = SimulationConfig {
        reps: 100,
        seed: 7,
        ..SimulationConfig::with_n(1000)
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            to_json(&run_monte_carlo(&cfg, Estimator::Sharp, &FitSpec::new(1)).unwrap()).unwrap()
        })
    };
    let lib = run(1) == run(4) && run(4) == run(4);

    let dir = tempfile::TempDir::new().unwrap();
    let data = dir.path().join("sample.csv");
    generate_sample(&SimulationConfig::with_n(3000), 4)
        .unwrap()
        .save_csv(&data)
        .unwrap();
    let d = data.to_str().unwrap();
    let commands: [&[&str]; 2] = [
        &["simulate", "--n", "1000", "--reps", "50", "--seed", "7"],
        &[
            "lr", "--data", d, "--at", "-650", "--k", "50,100", "--perms", "500", "--seed", "3",
        ],
    ];
    let cli = commands.iter().all(|args| {
        let a = rdx(args, "1");
        a == rdx(args, "1") && a == rdx(args, "4")
    });
    r.check(
        "8 determinism",
        lib && cli,
        format!(
            "library Monte Carlo {}, CLI simulate and lr {}",
            same(lib),
            same(cli)
        ),
    );
}

fn same(ok: bool) -> &'static str {
    if ok {
        "byte-identical across 1 and 4 threads"
    } else {
        "differ"
    }
}

fn reported_identities(r: &mut Report) {
    // components at three decimals: mu_1,low(xbar), mu_0,high(xbar),
    // mu_0,low(low), mu_0,high(low)
    let (m1l, m0h, m0l_low, m0h_low): (f64, f64, f64, f64) = (0.756, 0.706, 0.525, 0.667);
    let bias = m0l_low - m0h_low;
    let tau = m1l - m0h - bias;
    // three rounded inputs move the result by at most 0.0015
    r.check(
        "reported component arithmetic",
        (bias - -0.142).abs() < 1e-12 && (tau - 0.191).abs() <= 0.0015 + 1e-12,
        format!("bias {bias:.3}, tau {tau:.4} vs reported 0.191"),
    );
}

fn main() {
    let mut r = Report { failed: 0 };
    reported_identities(&mut r);
    exactness(&mut r);
    oracles(&mut r);
    fuzzy(&mut r);
    determinism(&mut r);
    test_size(&mut r);
    polybias(&mut r);
    coverage_and_accuracy(&mut r);
    if r.failed > 0 {
        println!("{} acceptance checks failed", r.failed);
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}

//! Tests of the parallel-controls assumption below the low cutoff.
//!
//! Both tests use only observations with `x < low`, where units in both
//! cutoff groups are untreated.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CutoffPair, Dataset};
use crate::error::{RdError, Result};
use crate::extrapolation::linspace;
use crate::locfit::{local_fit, rbc_interval, FitSpec, Interval, Sample, Side};
use crate::ols::{ols, select, wald_f};

/// Global polynomial order used when none is given.
pub const DEFAULT_GLOBAL_ORDER: usize = 2;
/// Points in the automatic derivative-test grid.
pub const AUTO_GRID_POINTS: usize = 10;
/// Tail share trimmed from each end of the pooled scores for the auto grid.
pub const AUTO_GRID_TRIM: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTrendResult {
    /// Intercept of the low group.
    pub alpha: f64,
    /// Intercept shift of the high group.
    pub beta: f64,
    /// Polynomial coefficients of the low group, orders `1..=order`.
    pub gamma: Vec<f64>,
    /// High-group differences in the polynomial coefficients.
    pub delta: Vec<f64>,
    /// Scores enter as `x - score_origin`.
    pub score_origin: f64,
    pub f_stat: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
    pub n_used: usize,
    pub order: usize,
    /// True when the intercept shift is tested together with `delta`.
    pub joint: bool,
    pub covariance: String,
}

/// Regresses `y` on `[1, S, r(x), S r(x)]` with `S = 1(C = high)` and
/// `r(x) = (x - low)^1..p` among units with `x < low`, then tests `delta = 0`
/// (or `beta = delta = 0` when `include_intercept_shift`) with an HC1 Wald F.
pub fn global_parallel_test(
    ds: &Dataset,
    pair: &CutoffPair,
    order: usize,
    include_intercept_shift: bool,
) -> Result<GlobalTrendResult> {
    if order == 0 {
        return Err(RdError::InvalidArgument(
            "global order must be at least 1".into(),
        ));
    }
    let rows: Vec<(f64, f64, bool)> = ds
        .observations()
        .iter()
        .filter(|o| o.x < pair.low && (o.c == pair.low || o.c == pair.high))
        .map(|o| (o.x - pair.low, o.y, o.c == pair.high))
        .collect();
    for (name, high) in [("low", false), ("high", true)] {
        let n = rows.iter().filter(|r| r.2 == high).count();
        if n < order + 2 {
            return Err(RdError::InsufficientData(format!(
                "{n} {name}-group observations below {}, need {}",
                pair.low,
                order + 2
            )));
        }
    }
    let k = 2 * order + 2;
    let n = rows.len();
    let x = DMatrix::from_fn(n, k, |i, j| {
        let (u, _, high) = rows[i];
        let s = f64::from(u8::from(high));
        match j {
            0 => 1.0,
            1 => s,
            j if j < order + 2 => u.powi((j - 1) as i32),
            j => s * u.powi((j - order - 1) as i32),
        }
    });
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.1));
    let fit = ols(&x, &y)?;
    let first = if include_intercept_shift {
        1
    } else {
        order + 2
    };
    let tested: Vec<usize> = std::iter::once(first)
        .chain(order + 2..k)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let r = select(k, &tested);
    let test = wald_f(&fit, &r, &DVector::zeros(tested.len()))?;
    Ok(GlobalTrendResult {
        alpha: fit.coef[0],
        beta: fit.coef[1],
        gamma: (2..order + 2).map(|j| fit.coef[j]).collect(),
        delta: (order + 2..k).map(|j| fit.coef[j]).collect(),
        score_origin: pair.low,
        f_stat: test.f_stat,
        df_num: test.df_num,
        df_den: test.df_den,
        p_value: test.p_value,
        n_used: n,
        order,
        joint: include_intercept_shift,
        covariance: "HC1".into(),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum DerivGrid {
    #[default]
    Auto,
    Points(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivPoint {
    pub x: f64,
    /// `mu'_low(x) - mu'_high(x)`, conventional.
    pub diff: f64,
    pub diff_rbc: f64,
    pub se_rbc: f64,
    pub ci_rbc: Interval,
    pub reject: bool,
    pub h_low: f64,
    pub h_high: f64,
    pub n_eff_low: usize,
    pub n_eff_high: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub x: f64,
    pub point: Option<DerivPoint>,
    /// Why the point was skipped.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivTestResult {
    pub level: f64,
    pub grid: Vec<GridOutcome>,
    /// `max |diff_rbc / se_rbc|` over the evaluated points.
    pub sup_stat: f64,
    pub any_reject: bool,
}

fn control_sample(ds: &Dataset, c: f64, below: f64) -> Sample {
    let mut rows = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, o) in ds.observations().iter().enumerate() {
        if o.c == c && o.x < below {
            rows.push(i);
            xs.push(o.x);
            ys.push(o.y);
        }
    }
    let cells = vec![0; rows.len()];
    Sample::new(rows, xs, ys, &cells)
}

/// Ten-point grid over the common support of both groups below `low`, after
/// trimming tails of the pooled score distribution.
pub fn auto_grid(ds: &Dataset, pair: &CutoffPair) -> Result<Vec<f64>> {
    let lo_s = control_sample(ds, pair.low, pair.low);
    let hi_s = control_sample(ds, pair.high, pair.low);
    if lo_s.is_empty() || hi_s.is_empty() {
        return Err(RdError::InsufficientData(format!(
            "both groups need observations below {}",
            pair.low
        )));
    }
    let range = |s: &Sample| {
        s.x()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            })
    };
    let (a0, a1) = range(&lo_s);
    let (b0, b1) = range(&hi_s);
    let mut pooled: Vec<f64> = lo_s.x().iter().chain(hi_s.x()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let q = |p: f64| pooled[((pooled.len() - 1) as f64 * p).round() as usize];
    let lo = a0.max(b0).max(q(AUTO_GRID_TRIM));
    let hi = a1.min(b1).min(q(1.0 - AUTO_GRID_TRIM));
    if !(lo < hi) {
        return Err(RdError::InsufficientData(
            "no common support below the low cutoff".into(),
        ));
    }
    Ok(linspace(lo, hi, AUTO_GRID_POINTS))
}

fn derivative_point(
    lo_s: &Sample,
    hi_s: &Sample,
    x: f64,
    spec: &FitSpec,
    level: f64,
) -> Result<DerivPoint> {
    let fl = local_fit(lo_s, spec, x)?;
    let rl = rbc_interval(&fl, lo_s, level)?;
    let fh = local_fit(hi_s, spec, x)?;
    let rh = rbc_interval(&fh, hi_s, level)?;
    let diff_rbc = rl.rbc_estimate - rh.rbc_estimate;
    let se_rbc = (rl.rbc_se.powi(2) + rh.rbc_se.powi(2)).sqrt();
    let ci_rbc = Interval::around(diff_rbc, se_rbc, level);
    Ok(DerivPoint {
        x,
        diff: fl.estimate - fh.estimate,
        diff_rbc,
        se_rbc,
        ci_rbc,
        reject: !ci_rbc.contains(0.0),
        h_low: fl.h_used,
        h_high: fh.h_used,
        n_eff_low: fl.n_eff,
        n_eff_high: fh.n_eff,
    })
}

/// Pointwise comparison of first derivatives of the two control functions
/// below `low`, from local quadratic fits in each group with RBC inference.
pub fn local_derivative_test(
    ds: &Dataset,
    pair: &CutoffPair,
    grid: &DerivGrid,
    spec: &FitSpec,
    level: f64,
) -> Result<DerivTestResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(RdError::InvalidArgument(format!(
            "level {level} not in (0, 1)"
        )));
    }
    let points = match grid {
        DerivGrid::Auto => auto_grid(ds, pair)?,
        DerivGrid::Points(p) => {
            if let Some(&bad) = p.iter().find(|&&x| !(x < pair.low)) {
                return Err(RdError::InvalidArgument(format!(
                    "derivative test point {bad} is not below {}",
                    pair.low
                )));
            }
            p.clone()
        }
    };
    let spec = FitSpec {
        p: spec.p.max(2),
        deriv: 1,
        side: Side::Both,
        ..*spec
    };
    let lo_s = control_sample(ds, pair.low, pair.low);
    let hi_s = control_sample(ds, pair.high, pair.low);
    let grid: Vec<GridOutcome> = points
        .par_iter()
        .map(|&x| match derivative_point(&lo_s, &hi_s, x, &spec, level) {
            Ok(p) => GridOutcome {
                x,
                point: Some(p),
                error: None,
            },
            Err(e) => GridOutcome {
                x,
                point: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let evaluated = grid.iter().filter_map(|g| g.point.as_ref());
    let sup_stat = evaluated
        .clone()
        .map(|p| {
            if p.se_rbc > 0.0 {
                (p.diff_rbc / p.se_rbc).abs()
            } else if p.diff_rbc == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let any_reject = evaluated.clone().any(|p| p.reject);
    Ok(DerivTestResult {
        level,
        grid,
        sup_stat,
        any_reject,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Design, Observation};
    use crate::extrapolation::testdata::{two_cutoff, wobble};

    const LOW: f64 = -850.0;
    const HIGH: f64 = -571.0;

    fn pair(ds: &Dataset) -> CutoffPair {
        CutoffPair::new(ds, LOW, HIGH).unwrap()
    }

    #[test]
    fn shifted_group_has_zero_delta_statistic() {
        // the high group is the low group moved up by a constant, noise included
        let mut obs = Vec::new();
        for i in 0..300 {
            let x = -1000.0 + 150.0 * (i as f64 + 0.5) / 300.0;
            let u = (x + 1000.0) / 100.0;
            let y = 0.3 + 0.1 * u - 0.02 * u * u + 0.3 * wobble(i);
            obs.push(Observation::sharp(y, x, LOW));
            obs.push(Observation::sharp(y + 0.25, x, HIGH));
        }
        let ds = Dataset::new(obs, Design::Sharp).unwrap();
        let r = global_parallel_test(&ds, &pair(&ds), 2, false).unwrap();
        assert!(r.f_stat < 1e-12, "{}", r.f_stat);
        assert!(r.p_value > 0.999);
        assert_eq!((r.df_num, r.gamma.len(), r.delta.len()), (2, 2, 2));
        assert!((r.beta - 0.25).abs() < 1e-10);
        let joint = global_parallel_test(&ds, &pair(&ds), 2, true).unwrap();
        assert_eq!(joint.df_num, 3);
        assert!(joint.p_value < 1e-10);
    }

    #[test]
    fn f_invariant_to_common_shift() {
        let ds = two_cutoff(500, LOW, HIGH, |x, c, _| {
            (x / 40.0).sin() * 0.2
                + wobble(((x + 1000.0) * 9.0) as usize)
                + if c == HIGH { 0.1 } else { 0.0 }
        });
        let p = pair(&ds);
        let a = global_parallel_test(&ds, &p, 2, false).unwrap();
        let shifted = ds.map_outcomes(|o| o.y + 5.0);
        let b = global_parallel_test(&shifted, &p, 2, false).unwrap();
        assert!((a.f_stat - b.f_stat).abs() < 1e-8 * a.f_stat.max(1.0));
        let high_only = ds.map_outcomes(|o| o.y + if o.c == HIGH { 1.0 } else { 0.0 });
        let c = global_parallel_test(&high_only, &p, 2, false).unwrap();
        assert!((a.f_stat - c.f_stat).abs() < 1e-8 * a.f_stat.max(1.0));
        let aj = global_parallel_test(&ds, &p, 2, true).unwrap();
        let cj = global_parallel_test(&high_only, &p, 2, true).unwrap();
        assert!((aj.f_stat - cj.f_stat).abs() > 1.0);
    }

    #[test]
    fn global_test_needs_rows() {
        let obs = vec![
            Observation::sharp(0.0, -900.0, LOW),
            Observation::sharp(0.0, -800.0, LOW),
            Observation::sharp(0.0, -600.0, HIGH),
            Observation::sharp(0.0, -500.0, HIGH),
        ];
        let ds = Dataset::new(obs, Design::Sharp).unwrap();
        assert!(matches!(
            global_parallel_test(&ds, &pair(&ds), 2, false),
            Err(RdError::InsufficientData(_))
        ));
    }

    #[test]
    fn identical_groups_have_zero_derivative_gap() {
        let ds = two_cutoff(400, LOW, HIGH, |x, _, _| (x / 60.0).sin());
        // same scores in both groups
        let obs: Vec<Observation> = ds
            .observations()
            .iter()
            .filter(|o| o.c == LOW)
            .flat_map(|o| vec![o.clone(), Observation::sharp(o.y, o.x, HIGH)])
            .collect();
        let ds = Dataset::new(obs, Design::Sharp).unwrap();
        let r = local_derivative_test(&ds, &pair(&ds), &DerivGrid::Auto, &FitSpec::new(2), 0.95)
            .unwrap();
        assert_eq!(r.grid.len(), AUTO_GRID_POINTS);
        for g in &r.grid {
            let p = g.point.as_ref().unwrap();
            assert_eq!(p.diff, 0.0);
            assert_eq!(p.diff_rbc, 0.0);
            assert!(g.x < LOW);
        }
        assert_eq!(r.sup_stat, 0.0);
    }

    #[test]
    fn slope_gap_recovered() {
        let ds = two_cutoff(400, LOW, HIGH, |x, c, _| if c == LOW { x } else { 2.0 * x });
        let grid = DerivGrid::Points(vec![-960.0, -920.0, -880.0]);
        let r = local_derivative_test(&ds, &pair(&ds), &grid, &FitSpec::new(2), 0.95).unwrap();
        for g in &r.grid {
            let p = g.point.as_ref().unwrap();
            assert!((p.diff + 1.0).abs() < 1e-8, "{}", p.diff);
        }
        assert_eq!(
            r.grid.iter().map(|g| g.x).collect::<Vec<_>>(),
            vec![-960.0, -920.0, -880.0]
        );
    }

    #[test]
    fn grid_points_must_be_below_low() {
        let ds = two_cutoff(200, LOW, HIGH, |x, _, _| x);
        let grid = DerivGrid::Points(vec![-900.0, LOW]);
        assert!(matches!(
            local_derivative_test(&ds, &pair(&ds), &grid, &FitSpec::new(2), 0.95),
            Err(RdError::InvalidArgument(_))
        ));
    }
}

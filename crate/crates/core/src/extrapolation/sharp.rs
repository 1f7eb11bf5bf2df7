//! Extrapolation under constant (or polynomial-in-score) bias.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_level, Combination, Component, ComponentFit, Inference};
use crate::dataset::{CutoffPair, DataView, Dataset, Filter};
use crate::error::{RdError, Result};
use crate::locfit::{FitSpec, Interval, Sample, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub xbar: f64,
    pub low: f64,
    pub high: f64,
    /// Extrapolated effect for the low-cutoff group at `xbar`.
    pub tau: f64,
    /// `mu_{0,low}(low-) - mu_{0,high}(low)`.
    pub bias_low: f64,
    /// Estimated bias derivatives at the low cutoff, orders `0..=order_bias`.
    pub bias_derivatives: Vec<f64>,
    /// `mu_{1,low}(xbar) - mu_{0,high}(xbar)`, the unadjusted comparison.
    pub naive: f64,
    /// Treated-low at xbar, control-high at xbar, then for each bias order the
    /// control-low and control-high fits at the low cutoff.
    pub components: Vec<Component>,
    pub variance: f64,
    /// Covariance correction: `variance = sum of weighted component variances - 2 * cov_term`.
    pub cov_term: f64,
    pub se: f64,
    pub ci_conventional: Interval,
    pub tau_rbc: f64,
    pub variance_rbc: f64,
    pub cov_term_rbc: f64,
    pub se_rbc: f64,
    pub ci_rbc: Interval,
    pub p_value_rbc: f64,
    pub order_bias: usize,
}

/// Samples for the three cells used by extrapolation.
pub(crate) struct Groups {
    pub treated_low: Sample,
    pub control_low: Sample,
    pub control_high: Sample,
}

impl Groups {
    pub fn build(base: &DataView<'_>, pair: &CutoffPair) -> Result<Groups> {
        let cell = |c: f64, assigned: bool, name: &str| -> Result<Sample> {
            let v = base.subset(&Filter::new().cutoff(c).assigned(assigned))?;
            if v.is_empty() {
                return Err(RdError::InsufficientData(format!(
                    "{name}: no observations"
                )));
            }
            Ok(Sample::outcome(&v))
        };
        Ok(Groups {
            treated_low: cell(pair.low, true, "treated-low")?,
            control_low: cell(pair.low, false, "control-low")?,
            control_high: cell(pair.high, false, "control-high")?,
        })
    }
}

/// Fits at the low cutoff, shared by every evaluation point.
pub(crate) struct LowFits {
    pub low: Vec<ComponentFit>,
    pub high: Vec<ComponentFit>,
}

fn derivative_spec(spec: &FitSpec, s: usize) -> FitSpec {
    let p = if s == 0 { spec.p } else { spec.p.max(s + 1) };
    FitSpec {
        p,
        deriv: s,
        ..*spec
    }
}

impl LowFits {
    pub fn run(
        groups: &Groups,
        pair: &CutoffPair,
        spec: &FitSpec,
        s_max: usize,
        level: f64,
    ) -> Result<LowFits> {
        let mut low = Vec::new();
        let mut high = Vec::new();
        for s in 0..=s_max {
            let ds = derivative_spec(spec, s);
            low.push(ComponentFit::run(
                &format!("mu0_low(low-){}", deriv_tag(s)),
                &groups.control_low,
                &ds.side(Side::Left),
                pair.low,
                level,
            )?);
            high.push(ComponentFit::run(
                &format!("mu0_high(low){}", deriv_tag(s)),
                &groups.control_high,
                &ds.side(Side::Both),
                pair.low,
                level,
            )?);
        }
        Ok(LowFits { low, high })
    }
}

fn deriv_tag(s: usize) -> String {
    match s {
        0 => String::new(),
        s => format!("[d{s}]"),
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

pub(crate) fn check_xbar(pair: &CutoffPair, xbar: f64) -> Result<()> {
    if xbar > pair.low && xbar <= pair.high {
        Ok(())
    } else {
        Err(RdError::XbarOutOfRange {
            xbar,
            low: pair.low,
            high: pair.high,
        })
    }
}

pub(crate) fn at_point(
    groups: &Groups,
    lows: &LowFits,
    pair: &CutoffPair,
    xbar: f64,
    spec: &FitSpec,
    level: f64,
) -> Result<ExtrapolationResult> {
    check_xbar(pair, xbar)?;
    let side = if xbar == pair.high {
        Side::Left
    } else {
        Side::Both
    };
    let base = FitSpec {
        deriv: 0,
        side,
        ..*spec
    };
    let treated = ComponentFit::run("mu1_low(xbar)", &groups.treated_low, &base, xbar, level)?;
    let control = ComponentFit::run("mu0_high(xbar)", &groups.control_high, &base, xbar, level)?;

    let s_max = lows.low.len() - 1;
    let dx = xbar - pair.low;
    let coefs: Vec<f64> = (0..=s_max)
        .map(|s| dx.powi(s as i32) / factorial(s))
        .collect();

    let bias_derivatives: Vec<f64> = lows
        .low
        .iter()
        .zip(&lows.high)
        .map(|(l, h)| l.fit.estimate - h.fit.estimate)
        .collect();
    let bias_derivatives_rbc: Vec<f64> = lows
        .low
        .iter()
        .zip(&lows.high)
        .map(|(l, h)| l.rbc.rbc_estimate - h.rbc.rbc_estimate)
        .collect();
    let correction: f64 = coefs
        .iter()
        .zip(&bias_derivatives)
        .map(|(a, b)| a * b)
        .sum();
    let correction_rbc: f64 = coefs
        .iter()
        .zip(&bias_derivatives_rbc)
        .map(|(a, b)| a * b)
        .sum();
    let naive = treated.fit.estimate - control.fit.estimate;
    let tau = treated.fit.estimate - control.fit.estimate - correction;
    let tau_rbc = treated.rbc.rbc_estimate - control.rbc.rbc_estimate - correction_rbc;

    let mut conv = Combination::new();
    conv.add(1.0, &treated.fit).add(-1.0, &control.fit);
    let mut rbc = Combination::new();
    rbc.add(1.0, &treated.rbc.corrected)
        .add(-1.0, &control.rbc.corrected);
    for (s, a) in coefs.iter().enumerate() {
        conv.add(-a, &lows.low[s].fit).add(*a, &lows.high[s].fit);
        rbc.add(-a, &lows.low[s].rbc.corrected)
            .add(*a, &lows.high[s].rbc.corrected);
    }
    let v = conv.variance()?;
    let vr = rbc.variance()?;
    let inf = Inference::new(tau, v.total, tau_rbc, vr.total, level);

    let mut components = vec![treated.summary(), control.summary()];
    for (l, h) in lows.low.iter().zip(&lows.high) {
        components.push(l.summary());
        components.push(h.summary());
    }
    Ok(ExtrapolationResult {
        xbar,
        low: pair.low,
        high: pair.high,
        tau,
        bias_low: bias_derivatives[0],
        bias_derivatives,
        naive,
        components,
        variance: v.total,
        cov_term: v.cov_term,
        se: inf.se,
        ci_conventional: inf.ci_conventional,
        tau_rbc,
        variance_rbc: vr.total,
        cov_term_rbc: vr.cov_term,
        se_rbc: inf.rbc_se,
        ci_rbc: inf.ci_rbc,
        p_value_rbc: inf.p_value_rbc,
        order_bias: s_max,
    })
}

pub(crate) fn polybias_view(
    base: &DataView<'_>,
    pair: &CutoffPair,
    xbar: f64,
    spec: &FitSpec,
    s_max: usize,
    level: f64,
) -> Result<ExtrapolationResult> {
    check_level(level)?;
    spec.validate()?;
    if s_max > 2 {
        return Err(RdError::UnsupportedOrder(s_max));
    }
    check_xbar(pair, xbar)?;
    let groups = Groups::build(base, pair)?;
    let lows = LowFits::run(&groups, pair, spec, s_max, level)?;
    at_point(&groups, &lows, pair, xbar, spec, level)
}

/// Extrapolated effect at `xbar` for units facing the low cutoff, assuming
/// the control regression functions of the two groups differ by a constant.
pub fn extrapolate_sharp(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    spec: &FitSpec,
    level: f64,
) -> Result<ExtrapolationResult> {
    polybias_view(&ds.view(), pair, xbar, spec, 0, level)
}

/// Extrapolation with the bias between control functions approximated by a
/// polynomial of order `s_max` in `(x - low)`, anchored at the low cutoff.
pub fn extrapolate_polybias(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    spec: &FitSpec,
    s_max: usize,
    level: f64,
) -> Result<ExtrapolationResult> {
    polybias_view(&ds.view(), pair, xbar, spec, s_max, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub xbar: f64,
    pub result: Option<ExtrapolationResult>,
    pub error: Option<String>,
}

/// Pointwise extrapolation over `points`. The low-cutoff fits are computed
/// once; per-point failures are reported in place.
pub fn extrapolation_grid(
    ds: &Dataset,
    pair: &CutoffPair,
    points: &[f64],
    spec: &FitSpec,
    level: f64,
) -> Result<Vec<GridPoint>> {
    check_level(level)?;
    spec.validate()?;
    let base = ds.view();
    let groups = Groups::build(&base, pair)?;
    let lows = LowFits::run(&groups, pair, spec, 0, level)?;
    Ok(points
        .par_iter()
        .map(
            |&xbar| match at_point(&groups, &lows, pair, xbar, spec, level) {
                Ok(r) => GridPoint {
                    xbar,
                    result: Some(r),
                    error: None,
                },
                Err(e) => GridPoint {
                    xbar,
                    result: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect())
}

/// `n` equidistant points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

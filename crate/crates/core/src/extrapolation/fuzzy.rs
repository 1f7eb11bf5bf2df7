//! Fuzzy extrapolation with one-sided noncompliance.

use serde::{Deserialize, Serialize};

use super::sharp::{check_xbar, polybias_view, ExtrapolationResult};
use super::{check_level, Component, ComponentFit};
use crate::dataset::{CutoffPair, Dataset, Filter};
use crate::error::{RdError, Result};
use crate::locfit::{normal_pvalue, FitSpec, Interval, Regressand, Sample, Score, Side};

/// First-stage estimates below this are rejected.
pub const MIN_FIRST_STAGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyResult {
    pub xbar: f64,
    /// Effect on compliers: `itt / first_stage`.
    pub tau: f64,
    pub se: f64,
    pub ci_conventional: Interval,
    pub tau_rbc: f64,
    pub se_rbc: f64,
    pub ci_rbc: Interval,
    pub p_value_rbc: f64,
    /// Extrapolated intention-to-treat effect of assignment.
    pub itt: ExtrapolationResult,
    /// `P(D = 1 | x = xbar, C = low)`, a local linear fit.
    pub first_stage: Component,
    /// Covariance assumed between the ITT and first-stage estimates.
    pub cov_itt_first_stage: f64,
}

/// Ratio `itt / f` and its delta-method variance with zero covariance.
pub fn ratio_estimate(itt: f64, var_itt: f64, f: f64, var_f: f64) -> (f64, f64) {
    (itt / f, var_itt / (f * f) + itt * itt * var_f / f.powi(4))
}

/// Extrapolated complier effect at `xbar` for the low-cutoff group.
///
/// Units below their own cutoff must be untreated. Assignment `x >= c`
/// replaces treatment in the sharp estimator to give the intention-to-treat
/// effect, which is divided by the first stage. The two are treated as
/// uncorrelated in the delta-method variance.
pub fn extrapolate_fuzzy(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    spec: &FitSpec,
    level: f64,
) -> Result<FuzzyResult> {
    check_level(level)?;
    spec.validate()?;
    check_xbar(pair, xbar)?;
    for (row, o) in ds.observations().iter().enumerate() {
        if o.d == 1 && !o.assigned() {
            return Err(RdError::ComplianceViolation { row: row + 1 });
        }
    }
    let base = ds.view();
    let itt = polybias_view(&base, pair, xbar, spec, 0, level)?;

    let assigned_low = base.subset(&Filter::new().cutoff(pair.low).assigned(true))?;
    let d_sample = Sample::from_view(&assigned_low, Regressand::Treatment, Score::Raw);
    let side = if xbar == pair.high {
        Side::Left
    } else {
        Side::Both
    };
    let fs_spec = FitSpec {
        p: 1,
        deriv: 0,
        side,
        ..*spec
    };
    let fs = ComponentFit::run("first_stage(xbar)", &d_sample, &fs_spec, xbar, level)?;
    let f = fs.fit.estimate;
    if !(f >= MIN_FIRST_STAGE) {
        return Err(RdError::WeakFirstStage(f));
    }
    let f_rbc = fs.rbc.rbc_estimate;
    if !(f_rbc >= MIN_FIRST_STAGE) {
        return Err(RdError::WeakFirstStage(f_rbc));
    }

    let (tau, var) = ratio_estimate(itt.tau, itt.variance, f, fs.fit.variance);
    let (tau_rbc, var_rbc) =
        ratio_estimate(itt.tau_rbc, itt.variance_rbc, f_rbc, fs.rbc.rbc_se.powi(2));
    let se = var.max(0.0).sqrt();
    let se_rbc = var_rbc.max(0.0).sqrt();
    Ok(FuzzyResult {
        xbar,
        tau,
        se,
        ci_conventional: Interval::around(tau, se, level),
        tau_rbc,
        se_rbc,
        ci_rbc: Interval::around(tau_rbc, se_rbc, level),
        p_value_rbc: normal_pvalue(tau_rbc, se_rbc),
        first_stage: fs.summary(),
        cov_itt_first_stage: 0.0,
        itt,
    })
}

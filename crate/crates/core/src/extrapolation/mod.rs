//! Cutoff-specific, pooled, and extrapolated treatment effects.
//!
//! Every estimator here is a fixed linear combination of local polynomial
//! fits. Point estimates, conventional variances and robust bias-corrected
//! variances are all built from the fits' smoother weights through
//! [`Combination`], which adds covariance terms for fits that share a sample.

mod covadj;
mod effects;
mod fuzzy;
mod sharp;

pub use covadj::{aggregate_cells, extrapolate_covadj, CellDetail, CovAdjResult, MIN_PROPENSITY};
pub use effects::{
    estimate_cutoff_effect, pooled_effect, weighted_average_effect, RDEffect, WeightedEffect,
};
pub use fuzzy::{extrapolate_fuzzy, ratio_estimate, FuzzyResult, MIN_FIRST_STAGE};
pub use sharp::{
    extrapolate_polybias, extrapolate_sharp, extrapolation_grid, linspace, ExtrapolationResult,
    GridPoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};
use crate::locfit::{
    fit_covariance, local_fit, rbc_interval, FitSpec, LocalFit, RbcInference, Sample, Side,
};

/// Confidence level used when none is given.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Summary of one component fit, as reported in tables and JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub x0: f64,
    pub side: Side,
    pub deriv: usize,
    pub estimate: f64,
    pub se: f64,
    pub rbc_estimate: f64,
    pub rbc_se: f64,
    /// Bandwidth ("Bw").
    pub h: f64,
    /// Observations inside the bandwidth ("Eff. N").
    pub n_eff: usize,
    pub degenerate_pilot: bool,
}

/// A fit together with its robust bias-corrected counterpart.
#[derive(Debug, Clone)]
pub(crate) struct ComponentFit {
    pub name: String,
    pub fit: LocalFit,
    pub rbc: RbcInference,
}

impl ComponentFit {
    pub fn run(name: &str, sample: &Sample, spec: &FitSpec, x0: f64, level: f64) -> Result<Self> {
        let fit = local_fit(sample, spec, x0).map_err(|e| with_cell(e, name))?;
        let rbc = rbc_interval(&fit, sample, level).map_err(|e| with_cell(e, name))?;
        Ok(ComponentFit {
            name: name.to_string(),
            fit,
            rbc,
        })
    }

    pub fn summary(&self) -> Component {
        Component {
            name: self.name.clone(),
            x0: self.fit.x0,
            side: self.fit.side,
            deriv: self.fit.deriv,
            estimate: self.fit.estimate,
            se: self.fit.se(),
            rbc_estimate: self.rbc.rbc_estimate,
            rbc_se: self.rbc.rbc_se,
            h: self.fit.h_used,
            n_eff: self.fit.n_eff,
            degenerate_pilot: self.fit.degenerate_pilot,
        }
    }
}

pub(crate) fn with_cell(e: RdError, cell: &str) -> RdError {
    match e {
        RdError::InsufficientData(msg) => RdError::InsufficientData(format!("{cell}: {msg}")),
        other => other,
    }
}

/// Variance of a linear combination of fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CombinedVariance {
    /// Sum of squared-coefficient variances.
    pub diagonal: f64,
    /// `-1/2` times the off-diagonal contribution, so that
    /// `total = diagonal - 2 * cov_term`.
    pub cov_term: f64,
    pub total: f64,
}

/// Linear combination `sum_k a_k * fit_k`.
pub(crate) struct Combination<'a> {
    terms: Vec<(f64, &'a LocalFit)>,
}

impl<'a> Combination<'a> {
    pub fn new() -> Self {
        Combination { terms: Vec::new() }
    }

    pub fn add(&mut self, coef: f64, fit: &'a LocalFit) -> &mut Self {
        self.terms.push((coef, fit));
        self
    }

    pub fn variance(&self) -> Result<CombinedVariance> {
        let mut diagonal = 0.0;
        let mut off = 0.0;
        for (k, &(ak, fk)) in self.terms.iter().enumerate() {
            diagonal += ak * ak * fk.variance;
            for &(am, fm) in &self.terms[k + 1..] {
                if fk.sample_id() == fm.sample_id() {
                    off += 2.0 * ak * am * fit_covariance(fk, fm)?;
                }
            }
        }
        let total = (diagonal + off).max(0.0);
        Ok(CombinedVariance {
            diagonal,
            cov_term: -0.5 * off,
            total,
        })
    }
}

/// Conventional and RBC inference for a scalar estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub estimate: f64,
    pub se: f64,
    pub ci_conventional: crate::locfit::Interval,
    pub rbc_estimate: f64,
    pub rbc_se: f64,
    pub ci_rbc: crate::locfit::Interval,
    pub p_value_rbc: f64,
}

impl Inference {
    pub fn new(estimate: f64, var: f64, rbc_estimate: f64, rbc_var: f64, level: f64) -> Self {
        let se = var.max(0.0).sqrt();
        let rbc_se = rbc_var.max(0.0).sqrt();
        Inference {
            estimate,
            se,
            ci_conventional: crate::locfit::Interval::around(estimate, se, level),
            rbc_estimate,
            rbc_se,
            ci_rbc: crate::locfit::Interval::around(rbc_estimate, rbc_se, level),
            p_value_rbc: crate::locfit::normal_pvalue(rbc_estimate, rbc_se),
        }
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(RdError::InvalidArgument(format!(
            "level {level} not in (0, 1)"
        )))
    }
}

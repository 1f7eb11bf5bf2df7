//! Extrapolation with bias that is constant only within covariate cells.

use serde::{Deserialize, Serialize};

use super::sharp::{check_xbar, polybias_view, ExtrapolationResult};
use super::{check_level, with_cell, Component};
use crate::dataset::{CutoffPair, Dataset, Filter};
use crate::error::{RdError, Result};
use crate::locfit::{
    fit_with_bandwidth, normal_pvalue, select_bandwidth_mse, Bandwidth, FitSpec, Interval,
    Regressand, Sample, Score, Side,
};

/// Estimated propensities must lie in `[MIN_PROPENSITY, 1 - MIN_PROPENSITY]`.
pub const MIN_PROPENSITY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDetail {
    /// Covariate labels joined by `|`.
    pub cell: String,
    /// `P(C = low | x = xbar, z)`.
    pub propensity: f64,
    /// `f(z | x = xbar)`.
    pub frequency: f64,
    pub weight: f64,
    pub result: ExtrapolationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovAdjResult {
    /// Weighted aggregate; components are weighted averages of the cell fits.
    pub result: ExtrapolationResult,
    pub cells: Vec<CellDetail>,
    /// Bandwidth of the propensity and cell-frequency estimates.
    pub h_aux: f64,
}

/// `(sum w_k tau_k, sum w_k^2 var_k)` for independent cell estimates with
/// fixed weights.
pub fn aggregate_cells(cells: &[(f64, f64, f64)]) -> (f64, f64) {
    cells.iter().fold((0.0, 0.0), |(t, v), &(w, tau, var)| {
        (t + w * tau, v + w * w * var)
    })
}

fn aggregate_components(cells: &[CellDetail]) -> Vec<Component> {
    let first = &cells[0].result.components;
    (0..first.len())
        .map(|k| {
            let mut c = first[k].clone();
            let w = |d: &CellDetail| d.weight;
            fn pick(d: &CellDetail, k: usize) -> &Component {
                &d.result.components[k]
            }
            let comp = |d| pick(d, k);
            c.estimate = cells.iter().map(|d| w(d) * comp(d).estimate).sum();
            c.rbc_estimate = cells.iter().map(|d| w(d) * comp(d).rbc_estimate).sum();
            c.se = cells
                .iter()
                .map(|d| (w(d) * comp(d).se).powi(2))
                .sum::<f64>()
                .sqrt();
            c.rbc_se = cells
                .iter()
                .map(|d| (w(d) * comp(d).rbc_se).powi(2))
                .sum::<f64>()
                .sqrt();
            c.h = cells.iter().map(|d| w(d) * comp(d).h).sum();
            c.n_eff = cells.iter().map(|d| comp(d).n_eff).sum();
            c.degenerate_pilot = cells.iter().any(|d| comp(d).degenerate_pilot);
            c
        })
        .collect()
}

/// Cell-wise constant-bias extrapolation averaged over the covariate
/// distribution of low-cutoff units at `xbar`.
///
/// Cell weights are `P(C = low | xbar, z) f(z | xbar)`, normalized. The
/// propensity is a local linear fit of `1(C = low)` on the score within the
/// cell; the frequency is a kernel-weighted share at `xbar`. Both use one
/// bandwidth: `spec`'s fixed bandwidth or, under auto, the MSE-optimal
/// bandwidth of the pooled propensity regression.
pub fn extrapolate_covadj(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    spec: &FitSpec,
    level: f64,
) -> Result<CovAdjResult> {
    check_level(level)?;
    spec.validate()?;
    check_xbar(pair, xbar)?;
    let all = ds.view();
    let aux = FitSpec {
        p: 1,
        deriv: 0,
        side: Side::Both,
        ..*spec
    };
    let h_aux = match spec.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => {
            let pooled = Sample::from_view(&all, Regressand::CutoffIndicator(pair.low), Score::Raw);
            select_bandwidth_mse(&pooled, &aux, xbar)?.h
        }
    };
    let kernel_mass = |rows: &mut dyn Iterator<Item = f64>| -> f64 {
        rows.map(|x| spec.kernel.weight((x - xbar) / h_aux)).sum()
    };
    let total_mass = kernel_mass(&mut all.iter().map(|o| o.x));
    if !(total_mass > 0.0) {
        return Err(RdError::DegenerateWeights);
    }

    let mut cells = Vec::new();
    for key in ds.covariate_cells() {
        let view = all.subset(&Filter::new().cell(key.clone()))?;
        for (c, assigned) in [(pair.low, true), (pair.low, false), (pair.high, false)] {
            let group = view.subset(&Filter::new().cutoff(c).assigned(assigned))?;
            if group.is_empty() {
                return Err(RdError::EmptyCell(key.clone()));
            }
        }
        let ps = Sample::from_view(&view, Regressand::CutoffIndicator(pair.low), Score::Raw);
        let propensity = fit_with_bandwidth(&ps, &aux, xbar, h_aux)
            .map_err(|e| with_cell(e, &key))?
            .estimate;
        if !(MIN_PROPENSITY..=1.0 - MIN_PROPENSITY).contains(&propensity) {
            return Err(RdError::SupportViolation {
                cell: key,
                propensity,
            });
        }
        let frequency = kernel_mass(&mut view.iter().map(|o| o.x)) / total_mass;
        let result =
            polybias_view(&view, pair, xbar, spec, 0, level).map_err(|e| with_cell(e, &key))?;
        cells.push(CellDetail {
            cell: key,
            propensity,
            frequency,
            weight: propensity * frequency,
            result,
        });
    }
    let norm: f64 = cells.iter().map(|c| c.weight).sum();
    if !(norm > 0.0) {
        return Err(RdError::DegenerateWeights);
    }
    for c in &mut cells {
        c.weight /= norm;
    }
    if cells.len() == 1 {
        return Ok(CovAdjResult {
            result: cells[0].result.clone(),
            cells,
            h_aux,
        });
    }

    let parts = |f: &dyn Fn(&ExtrapolationResult) -> (f64, f64)| -> (f64, f64) {
        let v: Vec<(f64, f64, f64)> = cells
            .iter()
            .map(|c| {
                let (t, var) = f(&c.result);
                (c.weight, t, var)
            })
            .collect();
        aggregate_cells(&v)
    };
    let (tau, variance) = parts(&|r| (r.tau, r.variance));
    let (tau_rbc, variance_rbc) = parts(&|r| (r.tau_rbc, r.variance_rbc));
    let (bias_low, cov_term) = parts(&|r| (r.bias_low, r.cov_term));
    let (_, cov_term_rbc) = parts(&|r| (0.0, r.cov_term_rbc));
    let (naive, _) = parts(&|r| (r.naive, 0.0));
    let se = variance.max(0.0).sqrt();
    let se_rbc = variance_rbc.max(0.0).sqrt();
    let result = ExtrapolationResult {
        xbar,
        low: pair.low,
        high: pair.high,
        tau,
        bias_low,
        bias_derivatives: vec![bias_low],
        naive,
        components: aggregate_components(&cells),
        variance,
        cov_term,
        se,
        ci_conventional: Interval::around(tau, se, level),
        tau_rbc,
        variance_rbc,
        cov_term_rbc,
        se_rbc,
        ci_rbc: Interval::around(tau_rbc, se_rbc, level),
        p_value_rbc: normal_pvalue(tau_rbc, se_rbc),
        order_bias: 0,
    };
    Ok(CovAdjResult {
        result,
        cells,
        h_aux,
    })
}

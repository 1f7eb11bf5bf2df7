//! Linear multi-cutoff regressions with cutoff fixed effects.
//!
//! ```text
//! y = gamma_j + beta_(j) x + delta_j D + theta_j x D + e
//! ```
//!
//! for a unit facing cutoff `c_j`, with `x` optionally re-centered at `c_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{RdError, Result};
use crate::ols::{ols, wald_f, FTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FEModelFit {
    pub cutoffs: Vec<f64>,
    pub common_slope: bool,
    /// Scores enter as `x - c_j` when true.
    pub centered: bool,
    pub gamma: Vec<f64>,
    /// One entry under a common slope, otherwise one per cutoff.
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub theta: Vec<f64>,
    /// All coefficients in the order gamma, beta, delta, theta.
    pub coef: Vec<f64>,
    /// HC1 covariance of `coef`, row major.
    pub vcov: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub n: usize,
    pub ssr: f64,
}

impl FEModelFit {
    pub fn n_coef(&self) -> usize {
        self.coef.len()
    }

    fn delta_index(&self, j: usize) -> usize {
        self.gamma.len() + self.beta.len() + j
    }

    fn theta_index(&self, j: usize) -> usize {
        self.gamma.len() + self.beta.len() + self.delta.len() + j
    }
}

/// Design matrix and outcome for the fixed-effects regression.
pub fn fe_design(
    ds: &Dataset,
    common_slope: bool,
    center: bool,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let j_count = ds.cutoffs().len();
    let nb = if common_slope { 1 } else { j_count };
    let k = 3 * j_count + nb;
    let mut counts = vec![[0usize; 2]; j_count];
    let obs = ds.observations();
    let mut x = DMatrix::zeros(obs.len(), k);
    for (i, o) in obs.iter().enumerate() {
        let j = ds.cutoff_index(o.c)?;
        let s = if center { o.x - o.c } else { o.x };
        let d = f64::from(o.d);
        counts[j][usize::from(o.d)] += 1;
        x[(i, j)] = 1.0;
        x[(i, j_count + if common_slope { 0 } else { j })] = s;
        x[(i, j_count + nb + j)] = d;
        x[(i, 2 * j_count + nb + j)] = d * s;
    }
    for (j, c) in counts.iter().enumerate() {
        for (t, &n) in c.iter().enumerate() {
            if n == 0 {
                let status = if t == 1 { "treated" } else { "control" };
                return Err(RdError::EmptyCell(format!(
                    "cutoff {} {status}",
                    ds.cutoffs()[j]
                )));
            }
        }
    }
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.y));
    Ok((x, y))
}

/// OLS fit of the fixed-effects model with HC1 covariance.
pub fn fit_fe_model(ds: &Dataset, common_slope: bool, center: bool) -> Result<FEModelFit> {
    let j_count = ds.cutoffs().len();
    let nb = if common_slope { 1 } else { j_count };
    let (x, y) = fe_design(ds, common_slope, center)?;
    let fit = ols(&x, &y)?;
    let coef: Vec<f64> = fit.coef.iter().copied().collect();
    let part = |a: usize, b: usize| coef[a..b].to_vec();
    Ok(FEModelFit {
        cutoffs: ds.cutoffs().to_vec(),
        common_slope,
        centered: center,
        gamma: part(0, j_count),
        beta: part(j_count, j_count + nb),
        delta: part(j_count + nb, 2 * j_count + nb),
        theta: part(2 * j_count + nb, 3 * j_count + nb),
        vcov: (0..fit.k)
            .map(|a| (0..fit.k).map(|b| fit.vcov[(a, b)]).collect())
            .collect(),
        residuals: fit.residuals.iter().copied().collect(),
        n: fit.n,
        ssr: fit.ssr(),
        coef,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FEEffect {
    pub cutoff: f64,
    pub xbar: f64,
    pub estimate: f64,
    pub se: f64,
}

/// `delta_j + theta_j * xbar`, with `xbar` in the fit's score coordinates
/// (distance to `c_j` for a centered fit).
pub fn fe_effect_at(fit: &FEModelFit, j: usize, xbar: f64) -> Result<FEEffect> {
    if j >= fit.cutoffs.len() {
        return Err(RdError::InvalidArgument(format!(
            "cutoff index {j} out of range for {} cutoffs",
            fit.cutoffs.len()
        )));
    }
    let (a, b) = (fit.delta_index(j), fit.theta_index(j));
    let estimate = fit.coef[a] + fit.coef[b] * xbar;
    let var = fit.vcov[a][a] + 2.0 * xbar * fit.vcov[a][b] + xbar * xbar * fit.vcov[b][b];
    Ok(FEEffect {
        cutoff: fit.cutoffs[j],
        xbar,
        estimate,
        se: var.max(0.0).sqrt(),
    })
}

/// Wald F test that control slopes are equal across cutoffs
/// (`J - 1` restrictions) in the per-cutoff slope model.
pub fn slope_equality_test(ds: &Dataset) -> Result<FTest> {
    let j_count = ds.cutoffs().len();
    if j_count < 2 {
        return Err(RdError::InvalidArgument(
            "slope equality needs at least two cutoffs".into(),
        ));
    }
    let (x, y) = fe_design(ds, false, true)?;
    let fit = ols(&x, &y)?;
    let mut r = DMatrix::zeros(j_count - 1, fit.k);
    for j in 1..j_count {
        r[(j - 1, j_count)] = 1.0;
        r[(j - 1, j_count + j)] = -1.0;
    }
    wald_f(&fit, &r, &DVector::zeros(j_count - 1))
}

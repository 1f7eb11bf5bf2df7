//! Ordinary least squares with HC1 covariance and Wald F tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{RdError, Result};

/// Reciprocal condition threshold on the column-scaled design.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    /// HC1 sandwich covariance.
    pub vcov: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub n: usize,
    pub k: usize,
}

impl OlsFit {
    pub fn ssr(&self) -> f64 {
        self.residuals.norm_squared()
    }

    pub fn df_resid(&self) -> usize {
        self.n - self.k
    }

    pub fn se(&self, j: usize) -> f64 {
        self.vcov[(j, j)].max(0.0).sqrt()
    }
}

/// Fits `y ~ X` by least squares.
///
/// Columns are scaled to unit norm before the QR decomposition so that raw
/// polynomial terms in large scores do not destroy conditioning.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(RdError::InsufficientData(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    let scales: Vec<f64> = (0..k)
        .map(|j| {
            let s = x.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut xs = x.clone();
    for (j, s) in scales.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = xs.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|j| r[(j, j)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    if diag.iter().any(|&d| !(d > RANK_TOL * dmax)) {
        return Err(RdError::SingularDesign("rank-deficient design".into()));
    }
    let qty = qr.q().transpose() * y;
    let coef_s = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| RdError::SingularDesign("triangular solve failed".into()))?;
    let residuals = y - &xs * &coef_s;

    // (X'X)^{-1} in the scaled parametrization via R^{-1} R^{-T}
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| RdError::SingularDesign("R not invertible".into()))?;
    let bread = &rinv * rinv.transpose();
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let xi = xs.row(i).transpose();
        meat += (&xi * xi.transpose()) * residuals[i].powi(2);
    }
    let hc1 = n as f64 / (n - k) as f64;
    let vcov_s = &bread * meat * &bread * hc1;

    let mut coef = coef_s;
    let mut vcov = vcov_s;
    for a in 0..k {
        coef[a] /= scales[a];
        for b in 0..k {
            vcov[(a, b)] /= scales[a] * scales[b];
        }
    }
    Ok(OlsFit {
        coef,
        vcov,
        residuals,
        n,
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub f_stat: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
}

/// Wald test of `R β = r` using the fit's covariance, reported as an F
/// statistic with `(q, n - k)` degrees of freedom.
pub fn wald_f(fit: &OlsFit, restrictions: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<FTest> {
    let q = restrictions.nrows();
    if q == 0 {
        return Err(RdError::InvalidArgument("no restrictions to test".into()));
    }
    let diff = restrictions * &fit.coef - rhs;
    let middle = restrictions * &fit.vcov * restrictions.transpose();
    let inv = middle
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| middle.try_inverse())
        .ok_or_else(|| RdError::SingularDesign("restriction covariance singular".into()))?;
    let w = (diff.transpose() * inv * &diff)[(0, 0)];
    let f_stat = (w / q as f64).max(0.0);
    let df_den = fit.df_resid();
    let p_value = f_pvalue(f_stat, q, df_den);
    Ok(FTest {
        f_stat,
        df_num: q,
        df_den,
        p_value,
    })
}

pub(crate) fn f_pvalue(f: f64, d1: usize, d2: usize) -> f64 {
    match FisherSnedecor::new(d1 as f64, d2.max(1) as f64) {
        Ok(dist) => (1.0 - dist.cdf(f)).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// Selection matrix picking the listed coefficients.
pub fn select(k: usize, idx: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(idx.len(), k);
    for (r, &j) in idx.iter().enumerate() {
        m[(r, j)] = 1.0;
    }
    m
}

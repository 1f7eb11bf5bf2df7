//! Kernel-weighted local polynomial regression.
//!
//! A fit at `x0` solves the weighted least-squares problem on the basis
//! `((x - x0) / h)^j, j = 0..=p`, with kernel weights `K((x - x0) / h)`.
//! Every fit carries its smoother weights, so estimates, variances and
//! covariances between fits are all linear functionals of the same vectors.

mod bandwidth;
mod kernel;
mod rbc;
mod sample;

pub use bandwidth::{select_bandwidth_mse, BandwidthChoice};
pub use kernel::KernelKind;
pub use rbc::{rbc_bias_explicit, rbc_interval, RbcInference};
pub use sample::{nn_variance, Regressand, Sample, Score, NN_NEIGHBORS};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{RdError, Result};

/// Condition-number ceiling for the scaled Gram matrix.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Observations with `x < x0` (left limit).
    Left,
    /// Observations with `x >= x0` (right limit).
    Right,
    #[default]
    Both,
}

impl Side {
    fn admits(self, x: f64, x0: f64) -> bool {
        match self {
            Side::Left => x < x0,
            Side::Right => x >= x0,
            Side::Both => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// MSE-optimal plug-in, selected per fit.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub p: usize,
    pub deriv: usize,
    pub kernel: KernelKind,
    pub bandwidth: Bandwidth,
    pub side: Side,
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec {
            p: 1,
            deriv: 0,
            kernel: KernelKind::Triangular,
            bandwidth: Bandwidth::Auto,
            side: Side::Both,
        }
    }
}

impl FitSpec {
    pub fn new(p: usize) -> Self {
        FitSpec {
            p,
            ..FitSpec::default()
        }
    }
    pub fn deriv(mut self, nu: usize) -> Self {
        self.deriv = nu;
        self
    }
    pub fn kernel(mut self, k: KernelKind) -> Self {
        self.kernel = k;
        self
    }
    pub fn bandwidth(mut self, h: f64) -> Self {
        self.bandwidth = Bandwidth::Fixed(h);
        self
    }
    pub fn auto(mut self) -> Self {
        self.bandwidth = Bandwidth::Auto;
        self
    }
    pub fn side(mut self, s: Side) -> Self {
        self.side = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.deriv > self.p {
            return Err(RdError::InvalidArgument(format!(
                "derivative order {} exceeds polynomial order {}",
                self.deriv, self.p
            )));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0) || !h.is_finite() {
                return Err(RdError::NonpositiveBandwidth(h));
            }
        }
        Ok(())
    }
}

/// One local polynomial fit at one evaluation point.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub x0: f64,
    pub p: usize,
    pub deriv: usize,
    pub kernel: KernelKind,
    pub side: Side,
    /// Coefficients of `(x - x0)^j` in score units.
    pub beta: Vec<f64>,
    /// `deriv! * beta[deriv]`.
    pub estimate: f64,
    /// Sample positions with nonzero kernel weight.
    pub support: Vec<usize>,
    /// Smoother weights aligned with `support`: `estimate = sum w_i y_i`.
    pub weights: Vec<f64>,
    /// Variance estimates aligned with `support`.
    pub sigma2: Vec<f64>,
    pub residuals: Vec<f64>,
    pub variance: f64,
    pub h_used: f64,
    pub n_eff: usize,
    /// Set when the bandwidth selector fell back to its clipping rule.
    pub degenerate_pilot: bool,
    pub(crate) sample_id: u64,
}

impl LocalFit {
    pub fn se(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }

    pub fn sample_id(&self) -> u64 {
        self.sample_id
    }
}

/// Fits at `x0`, selecting the bandwidth first when `spec.bandwidth` is auto.
pub fn local_fit(sample: &Sample, spec: &FitSpec, x0: f64) -> Result<LocalFit> {
    spec.validate()?;
    match spec.bandwidth {
        Bandwidth::Fixed(h) => fit_with_bandwidth(sample, spec, x0, h),
        Bandwidth::Auto => {
            let choice = select_bandwidth_mse(sample, spec, x0)?;
            let mut fit = fit_with_bandwidth(sample, spec, x0, choice.h)?;
            fit.degenerate_pilot = choice.degenerate_pilot;
            Ok(fit)
        }
    }
}

pub(crate) struct Design {
    /// sample positions
    pub idx: Vec<usize>,
    /// (x_i - x0) / h
    pub u: Vec<f64>,
    /// rows of `(R'WR)^{-1} R'W`, one per coefficient, in the scaled basis
    pub proj: DMatrix<f64>,
}

/// Kernel window and projection matrix for a fit at `x0` with bandwidth `h`.
pub(crate) fn build_design(
    x: &[f64],
    p: usize,
    kernel: KernelKind,
    side: Side,
    x0: f64,
    h: f64,
) -> Result<Design> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(RdError::NonpositiveBandwidth(h));
    }
    let mut idx = Vec::new();
    let mut u = Vec::new();
    let mut k = Vec::new();
    for (i, &xi) in x.iter().enumerate() {
        if !side.admits(xi, x0) {
            continue;
        }
        let ui = (xi - x0) / h;
        let ki = kernel.weight(ui);
        if ki > 0.0 {
            idx.push(i);
            u.push(ui);
            k.push(ki);
        }
    }
    let n = idx.len();
    let mut distinct: Vec<f64> = u.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < p + 1 {
        return Err(RdError::InsufficientData(format!(
            "{} distinct scores within h = {h:.4} of {x0}, need {}",
            distinct.len(),
            p + 1
        )));
    }
    let m = p + 1;
    let r = DMatrix::from_fn(n, m, |i, j| u[i].powi(j as i32));
    let mut rtw = r.transpose();
    for (i, &ki) in k.iter().enumerate() {
        rtw.column_mut(i).scale_mut(ki);
    }
    let gram = &rtw * &r;
    let eig = gram.clone().symmetric_eigen();
    let (mut lmin, mut lmax) = (f64::INFINITY, 0.0f64);
    for &l in eig.eigenvalues.iter() {
        lmin = lmin.min(l);
        lmax = lmax.max(l);
    }
    if !(lmin > 0.0) || lmax / lmin > MAX_CONDITION {
        return Err(RdError::InsufficientData(format!(
            "ill-conditioned local design at {x0} (condition {:.3e})",
            lmax / lmin
        )));
    }
    let chol = gram.cholesky().ok_or_else(|| {
        RdError::InsufficientData(format!("local design at {x0} not positive definite"))
    })?;
    let proj = chol.solve(&rtw);
    Ok(Design { idx, u, proj })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Fit with a given bandwidth (no selection).
pub fn fit_with_bandwidth(sample: &Sample, spec: &FitSpec, x0: f64, h: f64) -> Result<LocalFit> {
    if spec.deriv > spec.p {
        return Err(RdError::InvalidArgument("deriv > p".into()));
    }
    let design = build_design(sample.x(), spec.p, spec.kernel, spec.side, x0, h)?;
    let n = design.idx.len();
    let m = spec.p + 1;
    let ys = DVector::from_iterator(n, design.idx.iter().map(|&i| sample.y()[i]));
    let gamma = &design.proj * &ys;
    let nu = spec.deriv;
    let scale = factorial(nu) / h.powi(nu as i32);
    let weights: Vec<f64> = (0..n).map(|i| design.proj[(nu, i)] * scale).collect();

    let first = ys[0];
    let constant = ys.iter().all(|&v| v == first);
    let (beta, estimate, residuals) = if constant {
        let mut beta = vec![0.0; m];
        beta[0] = first;
        let est = if nu == 0 { first } else { 0.0 };
        (beta, est, vec![0.0; n])
    } else {
        let beta: Vec<f64> = (0..m).map(|j| gamma[j] / h.powi(j as i32)).collect();
        let residuals: Vec<f64> = (0..n)
            .map(|i| {
                let fitted: f64 = (0..m).map(|j| gamma[j] * design.u[i].powi(j as i32)).sum();
                ys[i] - fitted
            })
            .collect();
        (beta.clone(), factorial(nu) * beta[nu], residuals)
    };

    let sigma2: Vec<f64> = design
        .idx
        .iter()
        .zip(&residuals)
        .map(|(&i, r)| {
            let s = sample.sigma2()[i];
            if s.is_nan() {
                r * r
            } else {
                s
            }
        })
        .collect();
    let variance = weights
        .iter()
        .zip(&sigma2)
        .map(|(w, s)| w * w * s)
        .sum::<f64>()
        .max(0.0);

    Ok(LocalFit {
        x0,
        p: spec.p,
        deriv: nu,
        kernel: spec.kernel,
        side: spec.side,
        beta,
        estimate,
        support: design.idx,
        weights,
        sigma2,
        residuals,
        variance,
        h_used: h,
        n_eff: n,
        degenerate_pilot: false,
        sample_id: sample.id(),
    })
}

/// `sum_i w_a,i * w_b,i * sigma_i^2` over observations in both windows.
///
/// Both fits must come from the same [`Sample`].
pub fn fit_covariance(a: &LocalFit, b: &LocalFit) -> Result<f64> {
    if a.sample_id != b.sample_id {
        return Err(RdError::MismatchedViews);
    }
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.support.len() && j < b.support.len() {
        match a.support[i].cmp(&b.support[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let s2 = if a.sigma2[i] == b.sigma2[j] {
                    a.sigma2[i]
                } else {
                    0.5 * (a.sigma2[i] + b.sigma2[j])
                };
                acc += a.weights[i] * b.weights[j] * s2;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn around(center: f64, se: f64, level: f64) -> Interval {
        let z = normal_quantile(level);
        Interval {
            lo: center - z * se,
            hi: center + z * se,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Two-sided critical value `z_{1 - (1 - level) / 2}`.
pub fn normal_quantile(level: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Two-sided normal p-value of `estimate / se`.
pub fn normal_pvalue(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        let n = Normal::standard();
        (2.0 * (1.0 - n.cdf((estimate / se).abs()))).clamp(0.0, 1.0)
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    }
}

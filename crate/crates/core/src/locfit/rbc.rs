//! Robust bias-corrected inference with pilot bandwidth equal to the main one.
//!
//! With `b = h` the bias-corrected estimate of an order-`p` fit is exactly the
//! order-`(p+1)` fit at the same bandwidth, and its robust variance is that
//! fit's variance. [`rbc_interval`] uses this form; [`rbc_bias_explicit`]
//! computes the same correction as "estimate minus estimated leading bias".

use serde::{Deserialize, Serialize};

use super::{
    build_design, factorial, fit_with_bandwidth, normal_pvalue, FitSpec, Interval, LocalFit, Sample,
};
use crate::error::{RdError, Result};

#[derive(Debug, Clone)]
pub struct RbcInference {
    pub conventional: Interval,
    pub rbc: Interval,
    pub rbc_estimate: f64,
    pub rbc_se: f64,
    /// `estimate - rbc_estimate`.
    pub bias: f64,
    pub p_value_rbc: f64,
    /// The order-`(p+1)` fit. Its weights drive RBC covariances.
    pub corrected: LocalFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbcSummary {
    pub rbc_estimate: f64,
    pub rbc_se: f64,
    pub ci_conventional: Interval,
    pub ci_rbc: Interval,
    pub p_value_rbc: f64,
}

impl RbcInference {
    pub fn summary(&self) -> RbcSummary {
        RbcSummary {
            rbc_estimate: self.rbc_estimate,
            rbc_se: self.rbc_se,
            ci_conventional: self.conventional,
            ci_rbc: self.rbc,
            p_value_rbc: self.p_value_rbc,
        }
    }
}

pub fn rbc_interval(fit: &LocalFit, sample: &Sample, level: f64) -> Result<RbcInference> {
    if !(level > 0.0 && level < 1.0) {
        return Err(RdError::InvalidArgument(format!(
            "level {level} not in (0, 1)"
        )));
    }
    if fit.sample_id() != sample.id() {
        return Err(RdError::MismatchedViews);
    }
    let spec = FitSpec {
        p: fit.p + 1,
        deriv: fit.deriv,
        kernel: fit.kernel,
        bandwidth: super::Bandwidth::Fixed(fit.h_used),
        side: fit.side,
    };
    let corrected = fit_with_bandwidth(sample, &spec, fit.x0, fit.h_used)?;
    let rbc_se = corrected.se();
    Ok(RbcInference {
        conventional: Interval::around(fit.estimate, fit.se(), level),
        rbc: Interval::around(corrected.estimate, rbc_se, level),
        rbc_estimate: corrected.estimate,
        rbc_se,
        bias: fit.estimate - corrected.estimate,
        p_value_rbc: normal_pvalue(corrected.estimate, rbc_se),
        corrected,
    })
}

/// Bias-corrected estimate computed as `estimate - B_hat`, where `B_hat` is the
/// order-`p` smoother applied to `(x - x0)^{p+1}` times the order-`(p+1)`
/// coefficient from a fit with the same bandwidth.
pub fn rbc_bias_explicit(fit: &LocalFit, sample: &Sample) -> Result<f64> {
    let h = fit.h_used;
    let p = fit.p;
    let higher = FitSpec {
        p: p + 1,
        deriv: 0,
        kernel: fit.kernel,
        bandwidth: super::Bandwidth::Fixed(h),
        side: fit.side,
    };
    let top = fit_with_bandwidth(sample, &higher, fit.x0, h)?;
    let lead = top.beta[p + 1];
    let design = build_design(sample.x(), p, fit.kernel, fit.side, fit.x0, h)?;
    let scale = factorial(fit.deriv) / h.powi(fit.deriv as i32);
    let moment: f64 = design
        .u
        .iter()
        .enumerate()
        .map(|(i, &u)| design.proj[(fit.deriv, i)] * scale * (u * h).powi(p as i32 + 1))
        .sum();
    Ok(fit.estimate - moment * lead)
}

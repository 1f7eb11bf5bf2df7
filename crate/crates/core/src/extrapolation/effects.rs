use serde::{Deserialize, Serialize};

use super::{check_level, Combination, Component, ComponentFit, Inference};
use crate::dataset::{DataView, Dataset, Filter};
use crate::error::{RdError, Result};
use crate::locfit::{FitSpec, Interval, KernelKind, Regressand, Sample, Score, Side};

/// Sharp RD effect at a single cutoff (or at zero for the pooled sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDEffect {
    pub cutoff: f64,
    pub tau: f64,
    pub se_conventional: f64,
    pub ci_conventional: Interval,
    pub tau_rbc: f64,
    pub se_rbc: f64,
    pub ci_rbc: Interval,
    pub p_value_rbc: f64,
    pub h_left: f64,
    pub h_right: f64,
    pub n_eff_left: usize,
    pub n_eff_right: usize,
    /// Observations on each side of the cutoff in the estimation sample.
    pub n_left: usize,
    pub n_right: usize,
    pub components: Vec<Component>,
}

fn effect_on(sample: &Sample, x0: f64, spec: &FitSpec, level: f64) -> Result<RDEffect> {
    check_level(level)?;
    let n_left = sample.x().iter().filter(|&&x| x < x0).count();
    let n_right = sample.len() - n_left;
    for (side, n) in [("left", n_left), ("right", n_right)] {
        if n < spec.p + 2 {
            return Err(RdError::InsufficientData(format!(
                "{n} observations {side} of {x0}, need {}",
                spec.p + 2
            )));
        }
    }
    let right = ComponentFit::run("right", sample, &spec.side(Side::Right).deriv(0), x0, level)?;
    let left = ComponentFit::run("left", sample, &spec.side(Side::Left).deriv(0), x0, level)?;
    let tau = right.fit.estimate - left.fit.estimate;
    let tau_rbc = right.rbc.rbc_estimate - left.rbc.rbc_estimate;
    // the two sides use disjoint observations
    let var = Combination::new()
        .add(1.0, &right.fit)
        .add(-1.0, &left.fit)
        .variance()?
        .total;
    let var_rbc = Combination::new()
        .add(1.0, &right.rbc.corrected)
        .add(-1.0, &left.rbc.corrected)
        .variance()?
        .total;
    let inf = Inference::new(tau, var, tau_rbc, var_rbc, level);
    Ok(RDEffect {
        cutoff: x0,
        tau,
        se_conventional: inf.se,
        ci_conventional: inf.ci_conventional,
        tau_rbc,
        se_rbc: inf.rbc_se,
        ci_rbc: inf.ci_rbc,
        p_value_rbc: inf.p_value_rbc,
        h_left: left.fit.h_used,
        h_right: right.fit.h_used,
        n_eff_left: left.fit.n_eff,
        n_eff_right: right.fit.n_eff,
        n_left,
        n_right,
        components: vec![left.summary(), right.summary()],
    })
}

/// `mu_{1,c}(c) - mu_{0,c}(c)` from one-sided fits within the group facing `cutoff`.
pub fn estimate_cutoff_effect(
    ds: &Dataset,
    cutoff: f64,
    spec: &FitSpec,
    level: f64,
) -> Result<RDEffect> {
    cutoff_effect_view(&ds.view(), cutoff, spec, level)
}

pub(crate) fn cutoff_effect_view(
    base: &DataView<'_>,
    cutoff: f64,
    spec: &FitSpec,
    level: f64,
) -> Result<RDEffect> {
    let group = base.subset(&Filter::new().cutoff(cutoff))?;
    let sample = Sample::outcome(&group);
    effect_on(&sample, cutoff, spec, level)
}

/// RD effect at zero after recentering every score at its own cutoff.
pub fn pooled_effect(ds: &Dataset, spec: &FitSpec, level: f64) -> Result<RDEffect> {
    let sample = Sample::from_view(&ds.view(), Regressand::Outcome, Score::Normalized);
    effect_on(&sample, 0.0, spec, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEffect {
    pub cutoffs: Vec<f64>,
    pub weights: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub ci_conventional: Interval,
    pub rbc_estimate: f64,
    pub se_rbc: f64,
    pub ci_rbc: Interval,
    pub p_value_rbc: f64,
}

/// Weighted average of cutoff-specific effects with weights proportional to
/// `f(c | C = c) * P(C = c)`, estimated by a triangular kernel density at each
/// cutoff with that effect's average bandwidth. Weights are treated as fixed
/// for the variance.
pub fn weighted_average_effect(
    effects: &[RDEffect],
    ds: &Dataset,
    level: f64,
) -> Result<WeightedEffect> {
    check_level(level)?;
    if effects.len() < 2 {
        return Err(RdError::InvalidArgument(
            "weighted average needs at least two cutoff effects".into(),
        ));
    }
    for (i, e) in effects.iter().enumerate() {
        if effects[..i].iter().any(|o| o.cutoff == e.cutoff) {
            return Err(RdError::InvalidArgument(format!(
                "duplicate cutoff {} in weighted average",
                e.cutoff
            )));
        }
    }
    let n = ds.len() as f64;
    let raw: Vec<f64> = effects
        .iter()
        .map(|e| {
            ds.cutoff_index(e.cutoff)?;
            let h = 0.5 * (e.h_left + e.h_right);
            if !(h > 0.0) {
                return Err(RdError::NonpositiveBandwidth(h));
            }
            // f(c|c) * P(C=c) = (1 / (n h)) * sum over the group of K((x - c) / h)
            let k: f64 = ds
                .observations()
                .iter()
                .filter(|o| o.c == e.cutoff)
                .map(|o| KernelKind::Triangular.weight((o.x - e.cutoff) / h))
                .sum();
            Ok(k / (n * h))
        })
        .collect::<Result<_>>()?;
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(RdError::DegenerateWeights);
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut est = 0.0;
    let mut var = 0.0;
    let mut est_rbc = 0.0;
    let mut var_rbc = 0.0;
    for (w, e) in weights.iter().zip(effects) {
        est += w * e.tau;
        var += w * w * e.se_conventional.powi(2);
        est_rbc += w * e.tau_rbc;
        var_rbc += w * w * e.se_rbc.powi(2);
    }
    let inf = Inference::new(est, var, est_rbc, var_rbc, level);
    Ok(WeightedEffect {
        cutoffs: effects.iter().map(|e| e.cutoff).collect(),
        weights,
        estimate: est,
        se: inf.se,
        ci_conventional: inf.ci_conventional,
        rbc_estimate: est_rbc,
        se_rbc: inf.rbc_se,
        ci_rbc: inf.ci_rbc,
        p_value_rbc: inf.p_value_rbc,
    })
}

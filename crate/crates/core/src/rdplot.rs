//! Binned means and global polynomial fits for RD plots.
//!
//! Only the plot data is produced; drawing is left to external tools.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Filter};
use crate::error::{RdError, Result};
use crate::ols::ols;

pub const DEFAULT_BINS_PER_SIDE: usize = 20;

/// Which observations to plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotTarget {
    /// Units facing this cutoff, on the raw score.
    Cutoff(f64),
    /// All units, score recentered at each unit's own cutoff.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    /// NaN (null in JSON) for an empty bin.
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSide {
    pub bins: Vec<Bin>,
    /// Coefficients on `1, (x - cutoff), (x - cutoff)^2, ...`.
    pub fit: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDPlotData {
    pub target: PlotTarget,
    /// Threshold on the plotted score (0 when normalized).
    pub cutoff: f64,
    pub normalized: bool,
    pub order: usize,
    pub bins_per_side: usize,
    /// Scores below the cutoff.
    pub left: PlotSide,
    /// Scores at or above the cutoff.
    pub right: PlotSide,
}

impl PlotSide {
    /// Global polynomial evaluated at `x`.
    pub fn fitted(&self, x: f64, cutoff: f64) -> f64 {
        self.fit
            .iter()
            .rev()
            .fold(0.0, |acc, b| acc * (x - cutoff) + b)
    }
}

/// Evenly spaced bins over `[min, max]` of `x`; the last bin is closed.
pub fn bin_means(x: &[f64], y: &[f64], bins: usize) -> Vec<Bin> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (&xi, &yi) in x.iter().zip(y) {
        let b = if width > 0.0 {
            (((xi - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        sum[b] += yi;
        count[b] += 1;
    }
    (0..bins)
        .map(|b| {
            let a = lo + width * b as f64;
            let e = if b + 1 == bins {
                hi
            } else {
                lo + width * (b + 1) as f64
            };
            Bin {
                lo: a,
                hi: e,
                center: 0.5 * (a + e),
                mean: if count[b] > 0 {
                    sum[b] / count[b] as f64
                } else {
                    f64::NAN
                },
                count: count[b],
            }
        })
        .collect()
}

fn side(
    x: &[f64],
    y: &[f64],
    cutoff: f64,
    bins: usize,
    order: usize,
    label: &str,
) -> Result<PlotSide> {
    if x.len() <= order + 1 {
        return Err(RdError::InsufficientData(format!(
            "{} observations {label} of the cutoff, need more than {}",
            x.len(),
            order + 1
        )));
    }
    let design = DMatrix::from_fn(x.len(), order + 1, |i, j| (x[i] - cutoff).powi(j as i32));
    let fit = ols(&design, &DVector::from_column_slice(y))?;
    Ok(PlotSide {
        bins: bin_means(x, y, bins),
        fit: fit.coef.iter().copied().collect(),
        n: x.len(),
    })
}

pub fn rdplot_bins(
    ds: &Dataset,
    target: PlotTarget,
    bins_per_side: usize,
    order: usize,
) -> Result<RDPlotData> {
    if bins_per_side < 2 {
        return Err(RdError::InvalidArgument(format!(
            "bins_per_side must be at least 2, got {bins_per_side}"
        )));
    }
    if !(1..=2).contains(&order) {
        return Err(RdError::InvalidArgument(format!(
            "plot order must be 1 or 2, got {order}"
        )));
    }
    let (points, cutoff, normalized): (Vec<(f64, f64)>, f64, bool) = match target {
        PlotTarget::Cutoff(c) => {
            let view = ds.subset(&Filter::new().cutoff(c))?;
            (view.iter().map(|o| (o.x, o.y)).collect(), c, false)
        }
        PlotTarget::Pooled => (
            ds.observations().iter().map(|o| (o.x - o.c, o.y)).collect(),
            0.0,
            true,
        ),
    };
    let (l, r): (Vec<_>, Vec<_>) = points.into_iter().partition(|&(x, _)| x < cutoff);
    let (lx, ly): (Vec<f64>, Vec<f64>) = l.into_iter().unzip();
    let (rx, ry): (Vec<f64>, Vec<f64>) = r.into_iter().unzip();
    Ok(RDPlotData {
        target,
        cutoff,
        normalized,
        order,
        bins_per_side,
        left: side(&lx, &ly, cutoff, bins_per_side, order, "left")?,
        right: side(&rx, &ry, cutoff, bins_per_side, order, "right")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Design, Observation};

    fn data(y: impl Fn(f64) -> f64) -> Dataset {
        let obs = (0..80)
            .flat_map(|i| {
                let x = -100.0 + 2.5 * i as f64;
                [
                    Observation::sharp(y(x), x, 0.0),
                    Observation::sharp(y(x) + 1.0, x + 1.0, 50.0),
                ]
            })
            .collect();
        Dataset::new(obs, Design::Sharp).unwrap()
    }

    #[test]
    fn constant_outcome() {
        let ds = data(|_| 3.0);
        let p = rdplot_bins(&ds, PlotTarget::Cutoff(0.0), 5, 1).unwrap();
        for s in [&p.left, &p.right] {
            assert!(s.bins.iter().all(|b| b.mean == 3.0));
            assert!((s.fit[0] - 3.0).abs() < 1e-12 && s.fit[1].abs() < 1e-12);
        }
        assert_eq!(p.left.n + p.right.n, 80);
    }

    #[test]
    fn one_point_per_bin() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y = vec![5.0, -1.0, 2.0, 0.5, 7.0, 3.0];
        let bins = bin_means(&x, &y, 6);
        for (b, v) in bins.iter().zip(&y) {
            assert_eq!(b.count, 1);
            assert_eq!(b.mean, *v);
        }
    }

    #[test]
    fn pooled_is_normalized() {
        let ds = data(|x| 0.01 * x);
        let p = rdplot_bins(&ds, PlotTarget::Pooled, 4, 2).unwrap();
        assert!(p.normalized);
        assert_eq!(p.cutoff, 0.0);
        assert_eq!(p.left.n + p.right.n, ds.len());
        assert_eq!(p.left.fit.len(), 3);
        assert!(rdplot_bins(&ds, PlotTarget::Pooled, 1, 1).is_err());
        assert!(rdplot_bins(&ds, PlotTarget::Pooled, 4, 3).is_err());
    }
}

//! MSE-optimal plug-in bandwidth.
//!
//! A global polynomial of order `p+3`, fitted on the relevant side of `x0`,
//! serves as pilot for the regression function and the residual variance.
//! For a candidate `h` the local fit's actual smoother weights `w(h)` give
//!
//! ```text
//! bias(h) = sum_i w_i(h) m(x_i) - m^(nu)(x0)      (m = pilot polynomial)
//! var(h)  = sigma^2 sum_i w_i(h)^2
//! MSE(h)  = bias(h)^2 + Var(bias(h)) + var(h)
//! ```
//!
//! and `h` minimizes `MSE + bias_bc(h)^2` over `[h_min, h_max]`, where
//! `bias_bc` is the same bias for the order `p+1` fit used for bias
//! correction at the same bandwidth. The leading term of
//! `bias(h)` is `m^(p+1)(x0) / (p+1)! * sum_i w_i (x_i - x0)^{p+1}`, so for
//! small `h` the minimizer agrees with the textbook formula
//!
//! ```text
//! h = [ (1+2nu) V / (2(p+1-nu) B^2) ]^{1/(2p+3)} n^{-1/(2p+3)}
//! ```
//!
//! Keeping the higher pilot terms matters where `m^(p+1)(x0)` is close to
//! zero, e.g. at an inflection point, where the formula sends `h` to the full
//! data range. `Var(bias)`, the sampling variance of the pilot bias estimate,
//! regularizes the squared bias in the same spirit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_design, factorial, FitSpec, Sample, Side};
use crate::error::{RdError, Result};

/// Log-spaced candidates scanned before the golden-section refinement.
const GRID_POINTS: usize = 40;
const GOLDEN_STEPS: usize = 40;
/// Relative size below which the pilot's terms above order `p` count as zero.
const DEGENERATE_CURVATURE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub h: f64,
    /// Smallest bandwidth giving `p + 2` observations at least half the peak
    /// kernel weight, so the order `p + 1` bias-correction fit stays well posed.
    pub h_min: f64,
    /// Upper clip: range of the scores on the relevant side.
    pub h_max: f64,
    /// Estimated `(p+1)`-th derivative at `x0` from the pilot.
    pub pilot_derivative: f64,
    pub pilot_sigma2: f64,
    /// True when the pilot has no terms above order `p` and `h_max` was
    /// returned.
    pub degenerate_pilot: bool,
}

/// Global polynomial in `((x - x0) / s)^k`, `k = 0..=order`.
struct Pilot {
    x0: f64,
    s: f64,
    coef: DVector<f64>,
    /// `(X'X)^{-1}` in the scaled basis.
    xtx_inv: DMatrix<f64>,
    sigma2: f64,
}

impl Pilot {
    fn fit(x: &[f64], y: &[f64], order: usize, x0: f64) -> Result<Pilot> {
        let n = x.len();
        let s = x
            .iter()
            .map(|v| (v - x0).abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        let m = order + 1;
        let design = DMatrix::from_fn(n, m, |i, j| ((x[i] - x0) / s).powi(j as i32));
        let yv = DVector::from_column_slice(y);
        let svd = design.clone().svd(true, true);
        let coef = svd
            .solve(&yv, 1e-12)
            .map_err(|e| RdError::InsufficientData(format!("bandwidth pilot failed: {e}")))?;
        let resid = &yv - &design * &coef;
        let dof = if n > m { n - m } else { n };
        let sigma2 = resid.norm_squared() / dof as f64;
        // pseudo-inverse of X'X, dropping null directions
        let v_t = svd.v_t.as_ref().expect("svd computed with v");
        let tol = 1e-12 * svd.singular_values.max();
        let mut xtx_inv = DMatrix::zeros(m, m);
        for (k, &sv) in svd.singular_values.iter().enumerate() {
            if sv > tol {
                let v = v_t.row(k).transpose();
                xtx_inv += (&v * v.transpose()) / (sv * sv);
            }
        }
        Ok(Pilot {
            x0,
            s,
            coef,
            xtx_inv,
            sigma2,
        })
    }

    fn derivative(&self, k: usize) -> f64 {
        if k < self.coef.len() {
            factorial(k) * self.coef[k] / self.s.powi(k as i32)
        } else {
            0.0
        }
    }

    fn basis(&self, x: f64, k: usize) -> f64 {
        ((x - self.x0) / self.s).powi(k as i32)
    }
}

pub fn select_bandwidth_mse(sample: &Sample, spec: &FitSpec, x0: f64) -> Result<BandwidthChoice> {
    let p = spec.p;
    let nu = spec.deriv;
    let (xs, ys): (Vec<f64>, Vec<f64>) = sample
        .x()
        .iter()
        .zip(sample.y())
        .filter(|(&x, _)| match spec.side {
            Side::Left => x < x0,
            Side::Right => x >= x0,
            Side::Both => true,
        })
        .map(|(&x, &y)| (x, y))
        .unzip();
    let mut distinct = xs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < p + 3 {
        return Err(RdError::InsufficientData(format!(
            "bandwidth pilot at {x0} needs {} distinct scores, found {}",
            p + 3,
            distinct.len()
        )));
    }
    let h_max = distinct[distinct.len() - 1] - distinct[0];

    let mut dist: Vec<f64> = xs.iter().map(|x| (x - x0).abs()).collect();
    dist.sort_by(f64::total_cmp);
    let h_min = (2.0 * dist[p + 1]).max(f64::MIN_POSITIVE);

    let pilot_order = (p + 3).min(distinct.len() - 1);
    let pilot = Pilot::fit(&xs, &ys, pilot_order, x0)?;
    let mut choice = BandwidthChoice {
        h: h_max.max(h_min),
        h_min,
        h_max,
        pilot_derivative: pilot.derivative(p + 1),
        pilot_sigma2: pilot.sigma2,
        degenerate_pilot: false,
    };
    // largest contribution of the terms above order p over the data
    let excess = ((p + 1)..pilot.coef.len())
        .map(|k| pilot.coef[k].abs())
        .sum::<f64>();
    if !(excess > DEGENERATE_CURVATURE * sd(&ys)) {
        choice.degenerate_pilot = true;
        return Ok(choice);
    }
    if h_min >= h_max {
        return Ok(choice);
    }

    let x = sample.x();
    let target: Vec<f64> = (0..pilot.coef.len())
        .map(|k| {
            if k == nu {
                factorial(nu) / pilot.s.powi(nu as i32)
            } else {
                0.0
            }
        })
        .collect();
    // pilot-basis bias vector and sum of squared weights of the order `q` fit
    let smoother = |q: usize, h: f64| -> Option<(DVector<f64>, f64)> {
        let design = build_design(x, q, spec.kernel, spec.side, x0, h).ok()?;
        let scale = factorial(nu) / h.powi(nu as i32);
        let mut sum_w2 = 0.0;
        let mut a = DVector::from_iterator(target.len(), target.iter().map(|t| -t));
        for (j, &i) in design.idx.iter().enumerate() {
            let w = design.proj[(nu, j)] * scale;
            sum_w2 += w * w;
            for (k, ak) in a.iter_mut().enumerate() {
                *ak += w * pilot.basis(x[i], k);
            }
        }
        Some((a, sum_w2))
    };
    let mse = |h: f64| -> f64 {
        let (Some((a, sum_w2)), Some((a_bc, _))) = (smoother(p, h), smoother(p + 1, h)) else {
            return f64::INFINITY;
        };
        let bias = a.dot(&pilot.coef);
        let bias_var = pilot.sigma2 * (a.transpose() * &pilot.xtx_inv * &a)[(0, 0)];
        // the bias-corrected fit shares h, so its own bias is charged too
        let bias_bc = a_bc.dot(&pilot.coef);
        let v = bias * bias + bias_var.max(0.0) + bias_bc * bias_bc + pilot.sigma2 * sum_w2;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    // coarse scan on a log grid, then golden section around the best point
    let (lo, hi) = (h_min.ln(), h_max.ln());
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&g| mse(g.exp())).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(GRID_POINTS - 1);
    if !values[best].is_finite() {
        return Ok(choice);
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (mse(c.exp()), mse(d.exp()));
    for _ in 0..GOLDEN_STEPS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = mse(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = mse(d.exp());
        }
    }
    let (g, f) = if fc <= fd { (c, fc) } else { (d, fd) };
    choice.h = if f <= values[best] {
        g.exp()
    } else {
        grid[best].exp()
    }
    .clamp(h_min, h_max);
    Ok(choice)
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

//! Local randomization extrapolation.
//!
//! Inside a small window around the low cutoff, control units of the two
//! groups are compared to estimate the level shift `delta` between groups.
//! Inside a window around `xbar`, treated low-group units are compared with
//! high-group controls and the shift is removed:
//!
//! ```text
//! delta = Y_low(0, low) - Y_high(0, low)
//! tau   = Y_low(1, xbar) - Y_high(0, xbar) - delta
//! ```
//!
//! Inference is by Neyman's studentized statistic or by a randomization test
//! of the cutoff labels inside the `xbar` window, made valid for unknown
//! `delta` by the Berger-Boos supremum over a confidence set for `delta`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CutoffPair, Dataset};
use crate::error::{RdError, Result};
use crate::extrapolation::linspace;
use crate::locfit::{normal_pvalue, normal_quantile, Interval};
use crate::rng::{stream, PERMUTATION};

pub const MIN_NEIGHBORS: usize = 4;
pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_PERMS: usize = 2000;
pub const DEFAULT_GRID: usize = 100;
pub const MIN_PERMS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LRWindow {
    pub center: f64,
    pub k: usize,
    /// Row indices in ascending order; more than `k` when the boundary is tied.
    pub members: Vec<usize>,
    pub half_width: f64,
}

impl LRWindow {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }
    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

/// The `k` rows closest to `center`, plus every row tied with the `k`-th.
pub fn build_window(ds: &Dataset, center: f64, k: usize) -> Result<LRWindow> {
    if k < MIN_NEIGHBORS {
        return Err(RdError::InvalidArgument(format!(
            "window needs at least {MIN_NEIGHBORS} neighbors, got {k}"
        )));
    }
    if k > ds.len() {
        return Err(RdError::InsufficientData(format!(
            "{k} neighbors requested from {} observations",
            ds.len()
        )));
    }
    let dist: Vec<f64> = ds
        .observations()
        .iter()
        .map(|o| (o.x - center).abs())
        .collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let w = sorted[k - 1];
    let members: Vec<usize> = dist
        .iter()
        .enumerate()
        .filter(|(_, d)| **d <= w)
        .map(|(i, _)| i)
        .collect();
    Ok(LRWindow {
        center,
        k,
        members,
        half_width: w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjustment {
    /// Difference in means.
    #[default]
    Constant,
    /// Intercepts at the window center of within-cell linear fits.
    Linear,
}

impl std::str::FromStr for Adjustment {
    type Err = RdError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Adjustment::Constant),
            "linear" => Ok(Adjustment::Linear),
            other => Err(RdError::InvalidArgument(format!(
                "unknown adjustment {other}"
            ))),
        }
    }
}

/// Cell level and the variance of that level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub n: usize,
    pub level: f64,
    pub variance: f64,
}

/// Sums for a simple regression of `y` on `u`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    u: f64,
    y: f64,
    uu: f64,
    uy: f64,
}

impl Moments {
    fn add(&mut self, u: f64, y: f64) {
        self.n += 1.0;
        self.u += u;
        self.y += y;
        self.uu += u * u;
        self.uy += u * y;
    }

    fn minus(&self, o: &Moments) -> Moments {
        Moments {
            n: self.n - o.n,
            u: self.u - o.u,
            y: self.y - o.y,
            uu: self.uu - o.uu,
            uy: self.uy - o.uy,
        }
    }

    fn level(&self, adj: Adjustment) -> f64 {
        match adj {
            Adjustment::Constant => self.y / self.n,
            Adjustment::Linear => {
                let mu = self.u / self.n;
                let sxx = self.uu - self.n * mu * mu;
                let sxy = self.uy - self.u * self.y / self.n;
                let b = sxy / sxx;
                self.y / self.n - b * mu
            }
        }
    }
}

fn cell_estimate(us: &[f64], ys: &[f64], adj: Adjustment, name: &str) -> Result<CellEstimate> {
    let n = ys.len();
    if n == 0 {
        return Err(RdError::EmptyCell(name.into()));
    }
    let need = match adj {
        Adjustment::Constant => 2,
        Adjustment::Linear => 3,
    };
    if n < need {
        return Err(RdError::InsufficientData(format!(
            "{name}: {n} observations, need {need}"
        )));
    }
    let nf = n as f64;
    match adj {
        Adjustment::Constant => {
            let mean = ys.iter().sum::<f64>() / nf;
            let s2 = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            Ok(CellEstimate {
                n,
                level: mean,
                variance: s2 / nf,
            })
        }
        Adjustment::Linear => {
            let ubar = us.iter().sum::<f64>() / nf;
            let ybar = ys.iter().sum::<f64>() / nf;
            let sxx: f64 = us.iter().map(|u| (u - ubar).powi(2)).sum();
            if !(sxx > 0.0) {
                return Err(RdError::InsufficientData(format!(
                    "{name}: scores do not vary"
                )));
            }
            let sxy: f64 = us
                .iter()
                .zip(ys)
                .map(|(u, y)| (u - ubar) * (y - ybar))
                .sum();
            let b = sxy / sxx;
            let a = ybar - b * ubar;
            // HC1 variance of the intercept
            let s_uu: f64 = us.iter().map(|u| u * u).sum();
            let det = nf * s_uu - (nf * ubar).powi(2);
            let meat: f64 = us
                .iter()
                .zip(ys)
                .map(|(u, y)| {
                    let e = y - a - b * u;
                    // first row of (X'X)^{-1} x_i
                    let g = (s_uu - nf * ubar * u) / det;
                    g * g * e * e
                })
                .sum();
            Ok(CellEstimate {
                n,
                level: a,
                variance: meat * nf / (nf - 2.0),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LRCounts {
    /// Low-group controls in the low-cutoff window.
    pub low_control_at_low: usize,
    pub high_at_low: usize,
    /// Low-group treated units in the `xbar` window.
    pub low_treated_at_xbar: usize,
    pub high_at_xbar: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergerBoos {
    pub p_star: f64,
    /// `sup` of the randomization p-values over the grid, before adding `eta`.
    pub sup_p: f64,
    pub eta: f64,
    /// Confidence set for `delta` searched by the supremum.
    pub delta_set: Interval,
    pub grid: Vec<f64>,
    pub p_values: Vec<f64>,
    pub perms: Permutations,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LRResult {
    pub xbar: f64,
    pub k: usize,
    pub adjustment: Adjustment,
    pub delta_hat: f64,
    pub tau_hat: f64,
    /// Variance of the `xbar`-window contrast.
    pub v1: f64,
    pub v_delta: f64,
    pub counts: LRCounts,
    pub window_low: LRWindow,
    pub window_xbar: LRWindow,
    pub t_stat: Option<f64>,
    pub p_neyman: Option<f64>,
    pub bergerboos: Option<BergerBoos>,
    /// Randomization statistic and label scheme.
    pub statistic: String,
}

/// Units of the `xbar` window: relative score, outcome, low-group flag.
struct XbarUnits {
    u: Vec<f64>,
    y: Vec<f64>,
    low: Vec<bool>,
}

struct Prepared {
    result: LRResult,
    units: XbarUnits,
}

fn prepare(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    k: usize,
    adjustment: Adjustment,
) -> Result<Prepared> {
    if !(xbar > pair.low && xbar <= pair.high) {
        return Err(RdError::XbarOutOfRange {
            xbar,
            low: pair.low,
            high: pair.high,
        });
    }
    let wl = build_window(ds, pair.low, k)?;
    let wx = build_window(ds, xbar, k)?;
    if wl.hi() >= wx.lo() {
        return Err(RdError::OverlappingWindows);
    }
    let obs = ds.observations();
    let collect = |w: &LRWindow, c: f64, d: u8| -> (Vec<f64>, Vec<f64>) {
        w.members
            .iter()
            .map(|&i| &obs[i])
            .filter(|o| o.c == c && o.d == d)
            .map(|o| (o.x - w.center, o.y))
            .unzip()
    };
    let (u_lc, y_lc) = collect(&wl, pair.low, 0);
    let (u_hl, y_hl) = collect(&wl, pair.high, 0);
    let (u_lt, y_lt) = collect(&wx, pair.low, 1);
    let (u_hx, y_hx) = collect(&wx, pair.high, 0);
    let lc = cell_estimate(&u_lc, &y_lc, adjustment, "low-group controls near low")?;
    let hl = cell_estimate(&u_hl, &y_hl, adjustment, "high group near low")?;
    let lt = cell_estimate(&u_lt, &y_lt, adjustment, "low-group treated near xbar")?;
    let hx = cell_estimate(&u_hx, &y_hx, adjustment, "high group near xbar")?;
    let delta_hat = lc.level - hl.level;
    let tau_hat = lt.level - hx.level - delta_hat;

    let mut units = XbarUnits {
        u: u_lt,
        y: y_lt,
        low: vec![true; lt.n],
    };
    units.u.extend(u_hx);
    units.y.extend(y_hx);
    units.low.extend(std::iter::repeat_n(false, hx.n));

    let result = LRResult {
        xbar,
        k,
        adjustment,
        delta_hat,
        tau_hat,
        v1: lt.variance + hx.variance,
        v_delta: lc.variance + hl.variance,
        counts: LRCounts {
            low_control_at_low: lc.n,
            high_at_low: hl.n,
            low_treated_at_xbar: lt.n,
            high_at_xbar: hx.n,
        },
        window_low: wl,
        window_xbar: wx,
        t_stat: None,
        p_neyman: None,
        bergerboos: None,
        statistic: match adjustment {
            Adjustment::Constant => "difference in means; fixed-margin label permutations",
            Adjustment::Linear => {
                "difference in linear-fit intercepts; fixed-margin label permutations"
            }
        }
        .into(),
    };
    Ok(Prepared { result, units })
}

/// Point estimates with inference fields unset.
pub fn lr_estimate(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    k: usize,
    adjustment: Adjustment,
) -> Result<LRResult> {
    Ok(prepare(ds, pair, xbar, k, adjustment)?.result)
}

/// `T = tau / sqrt(v1 + v_delta)` and its two-sided normal p-value.
pub fn neyman_test(lr: &LRResult) -> Result<(f64, f64)> {
    let v = lr.v1 + lr.v_delta;
    if !(v > 0.0) {
        return Err(RdError::ZeroVariance);
    }
    let t = lr.tau_hat / v.sqrt();
    Ok((t, normal_pvalue(lr.tau_hat, v.sqrt())))
}

/// Label permutations used by the randomization test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Permutations {
    /// `m` uniformly drawn relabelings with the observed group sizes;
    /// `p = (1 + #{|T| >= |T_obs|}) / (m + 1)`.
    Random(usize),
    /// Every relabeling with the observed group sizes;
    /// `p = #{|T| >= |T_obs|} / count`.
    Exhaustive,
}

fn statistic(units: &XbarUnits, labels: &[bool], delta: f64, adj: Adjustment) -> f64 {
    let mut all = Moments::default();
    let mut low = Moments::default();
    for ((&u, &y), (&l, &orig)) in units
        .u
        .iter()
        .zip(&units.y)
        .zip(labels.iter().zip(&units.low))
    {
        // adjusted outcome: high-group units carry the shift
        let ya = if orig { y } else { y + delta };
        all.add(u, ya);
        if l {
            low.add(u, ya);
        }
    }
    let high = all.minus(&low);
    low.level(adj) - high.level(adj)
}

fn extreme(t: f64, t_obs: f64) -> bool {
    t.abs() >= t_obs.abs() - 1e-12 * (1.0 + t_obs.abs())
}

/// Calls `f` on every 0/1 labeling of `n` units with `n_low` ones.
fn for_each_labeling(n: usize, n_low: usize, f: &mut impl FnMut(&[bool])) {
    fn rec(pos: usize, left: usize, labels: &mut Vec<bool>, f: &mut impl FnMut(&[bool])) {
        let n = labels.len();
        if left == 0 {
            f(labels);
            return;
        }
        if n - pos < left {
            return;
        }
        labels[pos] = true;
        rec(pos + 1, left - 1, labels, f);
        labels[pos] = false;
        rec(pos + 1, left, labels, f);
    }
    let mut labels = vec![false; n];
    rec(0, n_low, &mut labels, f);
}

fn randomization_p(
    units: &XbarUnits,
    delta: f64,
    adj: Adjustment,
    perms: Permutations,
    seed: u64,
    grid_index: u64,
) -> f64 {
    let t_obs = statistic(units, &units.low, delta, adj);
    let n_low = units.low.iter().filter(|&&l| l).count();
    match perms {
        Permutations::Exhaustive => {
            let (mut hits, mut total) = (0u64, 0u64);
            for_each_labeling(units.low.len(), n_low, &mut |labels| {
                total += 1;
                if extreme(statistic(units, labels, delta, adj), t_obs) {
                    hits += 1;
                }
            });
            hits as f64 / total as f64
        }
        Permutations::Random(m) => {
            let mut labels = units.low.clone();
            let mut hits = 0usize;
            for r in 0..m {
                let mut rng = stream(seed, PERMUTATION, grid_index, r as u64);
                labels.copy_from_slice(&units.low);
                labels.shuffle(&mut rng);
                if extreme(statistic(units, &labels, delta, adj), t_obs) {
                    hits += 1;
                }
            }
            (1 + hits) as f64 / (m + 1) as f64
        }
    }
}

/// Randomization p-value of `tau = 0` for a known `delta`.
pub fn randomization_pvalue(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    k: usize,
    adjustment: Adjustment,
    delta: f64,
    perms: Permutations,
    seed: u64,
) -> Result<f64> {
    let prep = prepare(ds, pair, xbar, k, adjustment)?;
    Ok(randomization_p(
        &prep.units,
        delta,
        adjustment,
        perms,
        seed,
        0,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LRConfig {
    pub eta: f64,
    pub perms: Permutations,
    pub grid: usize,
    pub seed: u64,
}

impl Default for LRConfig {
    fn default() -> Self {
        LRConfig {
            eta: DEFAULT_ETA,
            perms: Permutations::Random(DEFAULT_PERMS),
            grid: DEFAULT_GRID,
            seed: 0,
        }
    }
}

impl LRConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 0.1) {
            return Err(RdError::InvalidEta(self.eta));
        }
        if let Permutations::Random(m) = self.perms {
            if m < MIN_PERMS {
                return Err(RdError::InvalidArgument(format!(
                    "at least {MIN_PERMS} permutations required, got {m}"
                )));
            }
        }
        if self.grid == 0 {
            return Err(RdError::InvalidArgument("empty delta grid".into()));
        }
        Ok(())
    }
}

fn bergerboos_prepared(prep: &Prepared, cfg: &LRConfig) -> Result<BergerBoos> {
    cfg.validate()?;
    let r = &prep.result;
    let z = normal_quantile(1.0 - cfg.eta);
    let half = z * r.v_delta.max(0.0).sqrt();
    let delta_set = Interval {
        lo: r.delta_hat - half,
        hi: r.delta_hat + half,
    };
    let grid = if half > 0.0 {
        linspace(delta_set.lo, delta_set.hi, cfg.grid)
    } else {
        vec![r.delta_hat]
    };
    let p_values: Vec<f64> = grid
        .par_iter()
        .enumerate()
        .map(|(g, &d)| randomization_p(&prep.units, d, r.adjustment, cfg.perms, cfg.seed, g as u64))
        .collect();
    let sup_p = p_values.iter().copied().fold(0.0, f64::max);
    Ok(BergerBoos {
        p_star: sup_p + cfg.eta,
        sup_p,
        eta: cfg.eta,
        delta_set,
        grid,
        p_values,
        perms: cfg.perms,
        seed: cfg.seed,
    })
}

/// Berger-Boos randomization p-value: the supremum of randomization
/// p-values over a `1 - eta` normal confidence set for `delta`, plus `eta`.
pub fn bergerboos_pvalue(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    k: usize,
    adjustment: Adjustment,
    cfg: &LRConfig,
) -> Result<BergerBoos> {
    cfg.validate()?;
    let prep = prepare(ds, pair, xbar, k, adjustment)?;
    bergerboos_prepared(&prep, cfg)
}

/// Estimates with Neyman and Berger-Boos inference.
pub fn local_randomization(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    k: usize,
    adjustment: Adjustment,
    cfg: &LRConfig,
) -> Result<LRResult> {
    cfg.validate()?;
    let prep = prepare(ds, pair, xbar, k, adjustment)?;
    let bb = bergerboos_prepared(&prep, cfg)?;
    let mut r = prep.result;
    if let Ok((t, p)) = neyman_test(&r) {
        r.t_stat = Some(t);
        r.p_neyman = Some(p);
    }
    r.bergerboos = Some(bb);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub k: usize,
    pub result: Option<LRResult>,
    pub error: Option<String>,
}

/// [`local_randomization`] for each window size; failures are reported per row.
pub fn lr_sensitivity(
    ds: &Dataset,
    pair: &CutoffPair,
    xbar: f64,
    k_list: &[usize],
    adjustment: Adjustment,
    cfg: &LRConfig,
) -> Result<Vec<SensitivityRow>> {
    cfg.validate()?;
    Ok(k_list
        .iter()
        .map(
            |&k| match local_randomization(ds, pair, xbar, k, adjustment, cfg) {
                Ok(r) => SensitivityRow {
                    k,
                    result: Some(r),
                    error: None,
                },
                Err(e) => SensitivityRow {
                    k,
                    result: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect())
}

//! Regression samples extracted from data views.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::dataset::DataView;

/// Neighbors used by the nearest-neighbor residual variance.
pub const NN_NEIGHBORS: usize = 3;

/// Which column plays the role of the regressand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regressand {
    Outcome,
    Treatment,
    /// `1(c == value)`
    CutoffIndicator(f64),
}

/// Score coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    Raw,
    /// `x - c`, distance to the unit's own cutoff.
    Normalized,
}

/// Scores, regressand, and per-observation variance estimates for one view.
///
/// `sigma2` holds the nearest-neighbor variance of each observation computed
/// within its (cutoff, side) cell, or NaN for cells with fewer than
/// `NN_NEIGHBORS + 1` members; fits fill those from their own residuals.
#[derive(Debug, Clone)]
pub struct Sample {
    id: u64,
    rows: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
    sigma2: Vec<f64>,
}

impl Sample {
    pub fn from_view(view: &DataView<'_>, regressand: Regressand, score: Score) -> Self {
        let ds = view.dataset();
        let mut x = Vec::with_capacity(view.len());
        let mut y = Vec::with_capacity(view.len());
        let mut cells = Vec::with_capacity(view.len());
        for o in view.iter() {
            x.push(match score {
                Score::Raw => o.x,
                Score::Normalized => o.x - o.c,
            });
            y.push(match regressand {
                Regressand::Outcome => o.y,
                Regressand::Treatment => f64::from(o.d),
                Regressand::CutoffIndicator(c) => f64::from(u8::from(o.c == c)),
            });
            let ci = ds.cutoff_index(o.c).unwrap_or(usize::MAX);
            cells.push(ci * 2 + usize::from(o.assigned()));
        }
        Sample::new(view.rows().to_vec(), x, y, &cells)
    }

    /// Outcome on raw scores; the common case.
    pub fn outcome(view: &DataView<'_>) -> Self {
        Sample::from_view(view, Regressand::Outcome, Score::Raw)
    }

    /// Builds a sample from raw vectors. `cells` groups observations for the
    /// nearest-neighbor variance.
    pub fn new(rows: Vec<usize>, x: Vec<f64>, y: Vec<f64>, cells: &[usize]) -> Self {
        assert_eq!(x.len(), y.len());
        assert_eq!(x.len(), rows.len());
        assert_eq!(x.len(), cells.len());
        let sigma2 = nn_variance(&x, &y, cells, NN_NEIGHBORS);
        let mut h = DefaultHasher::new();
        rows.hash(&mut h);
        for v in x.iter().chain(y.iter()) {
            v.to_bits().hash(&mut h);
        }
        Sample {
            id: h.finish(),
            rows,
            x,
            y,
            sigma2,
        }
    }

    /// Sample from plain vectors, all in one variance cell.
    pub fn from_xy(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        Sample::new((0..n).collect(), x, y, &vec![0; n])
    }

    pub fn id(&self) -> u64 {
        self.id
    }
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }
}

/// Nearest-neighbor residual variance:
/// `J/(J+1) * (y_i - mean of the J nearest neighbors' y)^2`,
/// with neighbors searched within the observation's cell by score distance.
pub fn nn_variance(x: &[f64], y: &[f64], cells: &[usize], neighbors: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![f64::NAN; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cells[a]
            .cmp(&cells[b])
            .then(x[a].total_cmp(&x[b]))
            .then(a.cmp(&b))
    });
    let mut start = 0;
    while start < n {
        let cell = cells[order[start]];
        let mut end = start;
        while end < n && cells[order[end]] == cell {
            end += 1;
        }
        let members = &order[start..end];
        if members.len() > neighbors {
            for (pos, &i) in members.iter().enumerate() {
                // expand left/right from pos picking the closer side
                let (mut lo, mut hi) = (pos, pos);
                let mut sum = 0.0;
                for _ in 0..neighbors {
                    let left = (lo > 0).then(|| x[i] - x[members[lo - 1]]);
                    let right = (hi + 1 < members.len()).then(|| x[members[hi + 1]] - x[i]);
                    let take_left = match (left, right) {
                        (Some(l), Some(r)) => l <= r,
                        (Some(_), None) => true,
                        _ => false,
                    };
                    if take_left {
                        lo -= 1;
                        sum += y[members[lo]];
                    } else {
                        hi += 1;
                        sum += y[members[hi]];
                    }
                }
                let j = neighbors as f64;
                out[i] = j / (j + 1.0) * (y[i] - sum / j).powi(2);
            }
        }
        start = end;
    }
    out
}

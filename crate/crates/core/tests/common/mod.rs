//! Helpers shared by the integration tests. The linear algebra here is
//! plain Gaussian elimination, kept apart from the library's solvers so it
//! can serve as an oracle.

#![allow(dead_code)]

use rdx::{Dataset, Design, Observation, Sample};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Weighted least squares of `y` on the columns of `design` (row major).
pub fn wls(design: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let m = design[0].len();
    let mut xtx = vec![vec![0.0; m]; m];
    let mut xty = vec![0.0; m];
    for ((row, &yi), &wi) in design.iter().zip(y).zip(w) {
        for a in 0..m {
            xty[a] += wi * row[a] * yi;
            for b in 0..m {
                xtx[a][b] += wi * row[a] * row[b];
            }
        }
    }
    solve(xtx, xty)
}

pub fn ols(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    wls(design, y, &vec![1.0; y.len()])
}

/// Smoother weights of the intercept in a kernel-weighted polynomial fit:
/// row 0 of `(X'WX)^{-1} X'W`, one entry per row of `x`.
pub fn intercept_weights(x: &[f64], x0: f64, p: usize, kw: &[f64]) -> Vec<f64> {
    let m = p + 1;
    let mut xtx = vec![vec![0.0; m]; m];
    for (&xi, &wi) in x.iter().zip(kw) {
        for a in 0..m {
            for b in 0..m {
                xtx[a][b] += wi * (xi - x0).powi((a + b) as i32);
            }
        }
    }
    // first row of the inverse
    let mut e0 = vec![0.0; m];
    e0[0] = 1.0;
    let r0 = solve(xtx, e0);
    x.iter()
        .zip(kw)
        .map(|(&xi, &wi)| {
            wi * (0..m)
                .map(|a| r0[a] * (xi - x0).powi(a as i32))
                .sum::<f64>()
        })
        .collect()
}

pub fn triangular(u: f64) -> f64 {
    (1.0 - u.abs()).max(0.0)
}

/// Deterministic pseudo-noise in `[-0.5, 0.5)`.
pub fn wobble(i: usize) -> f64 {
    ((i as f64 * 0.618_033_988_749_895).fract()) - 0.5
}

/// Two sharp cutoff groups on an evenly spaced grid of scores.
pub fn two_groups(
    n: usize,
    low: f64,
    high: f64,
    lo: f64,
    hi: f64,
    f: impl Fn(f64, f64) -> f64,
) -> Dataset {
    let obs = (0..n)
        .flat_map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            let x = lo + (hi - lo) * t;
            let xh = x + 0.37 * (hi - lo) / n as f64;
            [
                Observation::sharp(f(x, low), x, low),
                Observation::sharp(f(xh, high), xh, high),
            ]
        })
        .collect();
    Dataset::new(obs, Design::Sharp).unwrap()
}

pub fn curved_sample(n: usize) -> Sample {
    let x: Vec<f64> = (0..n)
        .map(|i| -3.0 + 6.0 * (i as f64 + wobble(i) * 0.8) / n as f64)
        .collect();
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| 1.0 + v - 0.4 * v * v + 0.2 * v.powi(3) + 0.3 * wobble(7 * i + 3))
        .collect();
    Sample::from_xy(x, y)
}

/// `J/(J+1) (y_i - mean of the J nearest y)^2` with `J = 3`, by brute force.
pub fn nn_variance_oracle(x: &[f64], y: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut others: Vec<usize> = (0..x.len()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| (x[a] - x[i]).abs().total_cmp(&(x[b] - x[i]).abs()));
            let m = others[..3].iter().map(|&j| y[j]).sum::<f64>() / 3.0;
            0.75 * (y[i] - m).powi(2)
        })
        .collect()
}

/// Low cutoff 0, high cutoff 10, `xbar = 5`; six units in each window.
pub fn six_row_fixture() -> Dataset {
    let rows = [
        // near the low cutoff: low-group and high-group controls
        (0.41, -0.3, 0.0),
        (0.52, -0.2, 0.0),
        (0.37, -0.1, 0.0),
        (0.63, -0.25, 10.0),
        (0.58, -0.15, 10.0),
        (0.71, 0.05, 10.0),
        // near xbar: low-group treated and high-group controls
        (1.13, 4.7, 0.0),
        (0.92, 4.95, 0.0),
        (1.31, 5.2, 0.0),
        (0.88, 4.8, 10.0),
        (1.07, 5.05, 10.0),
        (0.79, 5.3, 10.0),
    ];
    let obs = rows
        .iter()
        .map(|&(y, x, c)| Observation::sharp(y, x, c))
        .collect();
    Dataset::new(obs, Design::Sharp).unwrap()
}

/// Two-sided randomization p-value over all `2^6` labelings, keeping those
/// with three low-group units.
pub fn exhaustive_oracle(y_low: &[f64], y_high: &[f64], delta: f64) -> f64 {
    let ya: Vec<f64> = y_low
        .iter()
        .copied()
        .chain(y_high.iter().map(|v| v + delta))
        .collect();
    let stat = |mask: u32| {
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for (i, v) in ya.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s1 += v;
                n1 += 1.0;
            } else {
                s0 += v;
                n0 += 1.0;
            }
        }
        s1 / n1 - s0 / n0
    };
    let t_obs = stat(0b000111).abs();
    let masks: Vec<u32> = (0u32..64).filter(|m| m.count_ones() == 3).collect();
    let hits = masks
        .iter()
        .filter(|&&m| stat(m).abs() >= t_obs - 1e-9)
        .count();
    hits as f64 / masks.len() as f64
}

//! Kendall rank correlation (tau-b).
//!
//! Pair counts come from Knight's O(n log n) scheme: sort by `(x, y)`, count
//! ties in `x` and joint ties while scanning, then count discordant pairs as
//! the inversions of a merge sort on `y`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau: f64,
    pub concordant: u64,
    pub discordant: u64,
    /// Pairs tied in `x` (including those also tied in `y`).
    pub ties_x: u64,
    /// Pairs tied in `y` (including those also tied in `x`).
    pub ties_y: u64,
    /// Pairs tied in both.
    pub ties_xy: u64,
}

impl TauResult {
    /// Assembles the coefficient from raw pair counts.
    pub fn from_counts(
        n: usize,
        concordant: u64,
        discordant: u64,
        ties_x: u64,
        ties_y: u64,
        ties_xy: u64,
    ) -> Result<TauResult> {
        let total = pairs(n as u64);
        let (dx, dy) = (total - ties_x, total - ties_y);
        if dx == 0 || dy == 0 {
            return Err(Error::Degenerate("kendall tau undefined: one input is entirely tied".into()));
        }
        let tau = (concordant as f64 - discordant as f64) / ((dx as f64) * (dy as f64)).sqrt();
        Ok(TauResult { tau, concordant, discordant, ties_x, ties_y, ties_xy })
    }
}

fn pairs(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("NaN filtered before sorting")
}

pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<TauResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("kendall tau needs at least 2 observations, got {n}")));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::NaN("kendall tau input"));
    }

    let mut pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pts.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));

    let mut ties_x = 0;
    let mut ties_xy = 0;
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in pts.windows(2) {
        if w[0].0 == w[1].0 {
            run_x += 1;
            if w[0].1 == w[1].1 {
                run_xy += 1;
            } else {
                ties_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            ties_x += pairs(run_x);
            ties_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    ties_x += pairs(run_x);
    ties_xy += pairs(run_xy);

    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);

    let mut ties_y = 0;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            ties_y += pairs(run_y);
            run_y = 1;
        }
    }
    ties_y += pairs(run_y);

    let total = pairs(n as u64);
    let concordant = total + ties_xy - ties_x - ties_y - discordant;
    TauResult::from_counts(n, concordant, discordant, ties_x, ties_y, ties_xy)
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (lo, hi) = v.split_at_mut(mid);
        let (blo, bhi) = buf.split_at_mut(mid);
        merge_count(lo, blo) + merge_count(hi, bhi)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k = k + mid - i;
    buf[k..n].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

//! Epsilon-insensitive support vector regression trained by SMO.
//!
//! The dual is written over `2n` variables `a = [alpha; alpha*]` with signs
//! `s = [+1; -1]`:
//!
//! ```text
//! min 1/2 a^T Q a + p^T a   s.t.  s^T a = 0,  0 <= a <= C
//! Q_tu = s_t s_u K(x_t, x_u),  p = [eps - y; eps + y]
//! ```
//!
//! Each step updates the maximal violating pair (first-order selection) and
//! stops once the violation drops below `tol`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_sym, Kernel};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub tol: f64,
    /// Budget in sweeps; one sweep is `2n` pair updates.
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams { c: 1.0, epsilon: 0.01, tol: 1e-3, max_iter: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel<K> {
    x_train: DMatrix<f64>,
    /// `alpha_i - alpha*_i` per training point.
    dual: Vec<f64>,
    bias: f64,
    kernel: K,
    params: SvrParams,
    converged: bool,
    iterations: usize,
}

impl<K> SvrModel<K> {
    pub fn dual(&self) -> &[f64] {
        &self.dual
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn params(&self) -> &SvrParams {
        &self.params
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }
}

/// `1/2 b^T K b + eps * sum |b| - y^T b` for dual coefficients `b`.
pub fn svr_dual_objective(k: &DMatrix<f64>, y: &DVector<f64>, epsilon: f64, dual: &[f64]) -> f64 {
    let b = DVector::from_column_slice(dual);
    0.5 * b.dot(&(k * &b)) + epsilon * b.iter().map(|v| v.abs()).sum::<f64>() - y.dot(&b)
}

/// Trains the model. Running out of sweeps is not an error: the model comes
/// back with `converged() == false`.
pub fn svr_fit<K: Kernel + Clone>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kernel: K,
    params: SvrParams,
) -> Result<SvrModel<K>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("svr needs at least 2 points, got {n}")));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(Error::InvalidArgument(format!("svr C = {} must be > 0", params.c)));
    }
    if !(params.epsilon.is_finite() && params.epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("svr epsilon = {} must be >= 0", params.epsilon)));
    }
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("svr tol = {} must be > 0", params.tol)));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::NaN("svr targets"));
    }
    let k = gram_sym(&kernel, x)?;
    let (dual, bias, converged, iterations) = smo(&k, y, &params);
    Ok(SvrModel { x_train: x.clone(), dual, bias, kernel, params, converged, iterations })
}

pub fn svr_predict<K: Kernel>(model: &SvrModel<K>, x_star: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x_star.ncols() != model.x_train.ncols() {
        return Err(Error::DimensionMismatch { expected: model.x_train.ncols(), got: x_star.ncols() });
    }
    let g = gram(&model.kernel, x_star, &model.x_train)?;
    Ok((g * DVector::from_column_slice(&model.dual)).add_scalar(model.bias))
}

fn smo(k: &DMatrix<f64>, y: &DVector<f64>, params: &SvrParams) -> (Vec<f64>, f64, bool, usize) {
    let n = y.len();
    let m = 2 * n;
    let c = params.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let q = |t: usize, u: usize| sign(t) * sign(u) * k[(t % n, u % n)];

    let mut a = vec![0.0; m];
    let mut grad: Vec<f64> =
        (0..m).map(|t| if t < n { params.epsilon - y[t] } else { params.epsilon + y[t - n] }).collect();

    let budget = params.max_iter.saturating_mul(m);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        // Maximal violating pair.
        let (mut gmax, mut i) = (f64::NEG_INFINITY, usize::MAX);
        let (mut gmin, mut j) = (f64::INFINITY, usize::MAX);
        for t in 0..m {
            let s = sign(t);
            let v = -s * grad[t];
            let up = (s > 0.0 && a[t] < c) || (s < 0.0 && a[t] > 0.0);
            let low = (s < 0.0 && a[t] < c) || (s > 0.0 && a[t] > 0.0);
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (a[i], a[j]);
        if sign(i) != sign(j) {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Offset: average over free variables, else the midpoint of the feasible
    // interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..m {
        let s = sign(t);
        let yg = s * grad[t];
        if a[t] >= c {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a[t] <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };
    let dual = (0..n).map(|t| a[t] - a[t + n]).collect();
    (dual, -rho, converged, iterations)
}

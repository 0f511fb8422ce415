//! Square-root RBF kernels, their diagonally weighted variant, and the
//! weighted ensemble of the two.
//!
//! With `d = x1 - x2`:
//!
//! * square-root RBF: `exp(-sqrt(||d||) / l)` with `||d||` the Euclidean norm
//! * weighted: `exp(-sqrt(||d||_w) / l)` with `||d||_w = sqrt(d^T diag(w) d)`
//! * ensemble: `beta1 * rbf + beta2 * weighted`
//!
//! The weighted form is chosen so that unit weights reproduce the plain kernel
//! bit for bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can fill a Gram matrix.
pub trait Kernel {
    /// Input dimension the kernel is tied to, if any.
    fn dim(&self) -> Option<usize> {
        None
    }

    /// Evaluates without checking dimensions.
    fn call(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtRbf {
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedRbf {
    pub length: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    SqrtRbf(SqrtRbf),
    Weighted(WeightedRbf),
    Ensemble { beta1: f64, beta2: f64, rbf: SqrtRbf, weighted: WeightedRbf },
}

fn decay(sq_norm: f64, length: f64) -> f64 {
    (-sq_norm.sqrt().sqrt() / length).exp()
}

impl SqrtRbf {
    pub fn new(length: f64) -> Result<SqrtRbf> {
        check_length(length)?;
        Ok(SqrtRbf { length })
    }
}

impl WeightedRbf {
    pub fn new(length: f64, weights: Vec<f64>) -> Result<WeightedRbf> {
        check_length(length)?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("kernel weight {w} must be >= 0")));
        }
        Ok(WeightedRbf { length, weights })
    }
}

fn check_length(length: f64) -> Result<()> {
    if length.is_finite() && length > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("kernel length {length} must be > 0")))
    }
}

impl Kernel for SqrtRbf {
    fn call(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        decay(sq, self.length)
    }
}

impl Kernel for WeightedRbf {
    fn dim(&self) -> Option<usize> {
        Some(self.weights.len())
    }

    fn call(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| w * ((x - y) * (x - y))).sum();
        decay(sq, self.length)
    }
}

impl KernelSpec {
    pub fn sqrt_rbf(length: f64) -> Result<KernelSpec> {
        Ok(KernelSpec::SqrtRbf(SqrtRbf::new(length)?))
    }

    pub fn weighted(length: f64, weights: Vec<f64>) -> Result<KernelSpec> {
        Ok(KernelSpec::Weighted(WeightedRbf::new(length, weights)?))
    }

    /// `beta1 * SqrtRbf(length) + beta2 * Weighted(length, weights)`.
    pub fn ensemble(beta1: f64, beta2: f64, length: f64, weights: Vec<f64>) -> Result<KernelSpec> {
        let spec = KernelSpec::Ensemble {
            beta1,
            beta2,
            rbf: SqrtRbf::new(length)?,
            weighted: WeightedRbf::new(length, weights)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::SqrtRbf(k) => check_length(k.length),
            KernelSpec::Weighted(k) => WeightedRbf::new(k.length, k.weights.clone()).map(|_| ()),
            KernelSpec::Ensemble { beta1, beta2, rbf, weighted } => {
                check_length(rbf.length)?;
                WeightedRbf::new(weighted.length, weighted.weights.clone())?;
                let ok = |b: f64| b.is_finite() && b >= 0.0;
                if !(ok(*beta1) && ok(*beta2) && beta1 + beta2 > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "ensemble ratio ({beta1}, {beta2}) must be non-negative with positive sum"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Largest value the kernel can take (at zero distance).
    pub fn max_value(&self) -> f64 {
        match self {
            KernelSpec::Ensemble { beta1, beta2, .. } => beta1 + beta2,
            _ => 1.0,
        }
    }
}

impl Kernel for KernelSpec {
    fn dim(&self) -> Option<usize> {
        match self {
            KernelSpec::SqrtRbf(_) => None,
            KernelSpec::Weighted(k) => k.dim(),
            KernelSpec::Ensemble { weighted, .. } => weighted.dim(),
        }
    }

    fn call(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::SqrtRbf(k) => k.call(a, b),
            KernelSpec::Weighted(k) => k.call(a, b),
            KernelSpec::Ensemble { beta1, beta2, rbf, weighted } => {
                beta1 * rbf.call(a, b) + beta2 * weighted.call(a, b)
            }
        }
    }
}

/// Plain dot product; handy as an SVR kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearKernel;

impl Kernel for LinearKernel {
    fn call(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn check_dims<K: Kernel + ?Sized>(kernel: &K, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    match kernel.dim() {
        Some(d) if d != a => Err(Error::DimensionMismatch { expected: d, got: a }),
        _ => Ok(()),
    }
}

pub fn eval<K: Kernel + ?Sized>(kernel: &K, x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_dims(kernel, x1.len(), x2.len())?;
    Ok(kernel.call(x1, x2))
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `G[i][j] = k(x_i, y_j)`.
pub fn gram<K: Kernel + ?Sized>(kernel: &K, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(kernel, x.ncols(), y.ncols())?;
    let xr = rows(x);
    let yr = rows(y);
    Ok(DMatrix::from_fn(xr.len(), yr.len(), |i, j| kernel.call(&xr[i], &yr[j])))
}

/// Gram matrix of `x` against itself; each unordered pair is evaluated once
/// and mirrored, so the result is exactly symmetric.
pub fn gram_sym<K: Kernel + ?Sized>(kernel: &K, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(kernel, x.ncols(), x.ncols())?;
    let xr = rows(x);
    let n = xr.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.call(&xr[i], &xr[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

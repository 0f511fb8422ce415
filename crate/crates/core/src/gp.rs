//! Gaussian-process regression with a pluggable prior mean.
//!
//! The posterior mean at test inputs `X*` is
//! `m(X*) + k(X*, X) (K + sigma_n^2 I)^-1 (y - m(X))`: the prior guess plus a
//! gain-weighted correction of the training residuals. The solve goes through
//! a Cholesky factor; if `K + sigma_n^2 I` is not numerically positive definite
//! a growing diagonal jitter is added (0, then 1e-10 up to 1e-4 by factors of
//! ten) and the jitter that worked is recorded on the model.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_sym, Kernel, KernelSpec};

pub const DEFAULT_NOISE: f64 = 1e-6;
const MAX_JITTER: f64 = 1e-4;

/// `m(x) = w . x + b`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPrior {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearPrior {
    pub fn constant(dim: usize, value: f64) -> LinearPrior {
        LinearPrior { weights: vec![0.0; dim], bias: value }
    }

    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: x.ncols() });
        }
        let w = DVector::from_column_slice(&self.weights);
        Ok((x * w).add_scalar(self.bias))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorMean {
    Linear(LinearPrior),
    /// Values are supplied by the caller at fit and predict time, e.g. the
    /// averaged predictions of other models.
    External {
        source: String,
    },
}

impl PriorMean {
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            PriorMean::Linear(p) => p.evaluate(x),
            PriorMean::External { source } => Err(Error::InvalidArgument(format!(
                "prior '{source}' is external; pass its values explicitly"
            ))),
        }
    }
}

/// Ridge regression with an unpenalized intercept, minimizing
/// `||X w + b - y||^2 + ridge ||w||^2`. With `ridge = 0` and a rank-deficient
/// design the minimum-norm `w` is returned.
pub fn fit_prior_linear(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<PriorMean> {
    Ok(PriorMean::Linear(fit_linear(x, y, ridge)?))
}

pub fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<LinearPrior> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge {ridge} must be >= 0")));
    }
    if y.iter().any(|v| v.is_nan()) || x.iter().any(|v| v.is_nan()) {
        return Err(Error::NaN("linear prior inputs"));
    }
    let x_mean = x.row_mean();
    let y_mean = y.mean();
    let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - x_mean[j]);
    let yc = y.add_scalar(-y_mean);

    let w = if d == 0 {
        DVector::zeros(0)
    } else {
        let svd = xc.svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let s = &svd.singular_values;
        let s_max = s.max();
        let cutoff = f64::EPSILON * s_max * n.max(d) as f64;
        let uty = u.transpose() * &yc;
        let scaled = DVector::from_fn(s.len(), |i, _| {
            let si = s[i];
            if si == 0.0 || (ridge == 0.0 && si <= cutoff) {
                0.0
            } else {
                si / (si * si + ridge) * uty[i]
            }
        });
        v_t.transpose() * scaled
    };
    let bias = y_mean - (x_mean * &w)[0];
    Ok(LinearPrior { weights: w.iter().copied().collect(), bias })
}

/// A fitted GP: everything needed to produce posterior means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    x_train: DMatrix<f64>,
    residuals: DVector<f64>,
    chol: DMatrix<f64>,
    dual: DVector<f64>,
    kernel: KernelSpec,
    prior: PriorMean,
    sigma_n2: f64,
    jitter_used: f64,
}

/// Fits a GP whose prior can be evaluated directly (i.e. not external).
pub fn gp_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kernel: KernelSpec,
    prior: PriorMean,
    sigma_n2: f64,
) -> Result<GpModel> {
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let m = prior.evaluate(x)?;
    GpModel::fit_with_prior_values(x, y, &m, kernel, prior, sigma_n2)
}

pub fn gp_predict(model: &GpModel, x_star: &DMatrix<f64>) -> Result<DVector<f64>> {
    model.predict(x_star)
}

/// Lower Cholesky factor of `a + jitter I` for the first jitter on the ladder
/// that succeeds.
pub(crate) fn factor_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    let mut jitter = 0.0;
    loop {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            let l = c.l();
            if l.iter().all(|v| v.is_finite()) {
                return Ok((l, jitter));
            }
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > MAX_JITTER * 1.000_001 {
            return Err(Error::NotPositiveDefinite { jitter: MAX_JITTER });
        }
    }
}

pub(crate) fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("cholesky factor has a nonzero diagonal");
    l.tr_solve_lower_triangular(&z).expect("cholesky factor has a nonzero diagonal")
}

impl GpModel {
    /// Fits with the prior already evaluated at the training inputs.
    pub fn fit_with_prior_values(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        prior_at_x: &DVector<f64>,
        kernel: KernelSpec,
        prior: PriorMean,
        sigma_n2: f64,
    ) -> Result<GpModel> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for len in [y.len(), prior_at_x.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        if !(sigma_n2.is_finite() && sigma_n2 >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise variance {sigma_n2} must be >= 0")));
        }
        if y.iter().chain(prior_at_x.iter()).any(|v| v.is_nan()) {
            return Err(Error::NaN("gp targets"));
        }
        kernel.validate()?;
        let mut k = gram_sym(&kernel, x)?;
        for i in 0..n {
            k[(i, i)] += sigma_n2;
        }
        let (chol, jitter_used) = factor_with_jitter(&k)?;
        let residuals = y - prior_at_x;
        let dual = cholesky_solve(&chol, &residuals);
        Ok(GpModel { x_train: x.clone(), residuals, chol, dual, kernel, prior, sigma_n2, jitter_used })
    }

    pub fn predict(&self, x_star: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_dim(x_star)?;
        let m = self.prior.evaluate(x_star)?;
        self.predict_with_prior(x_star, &m)
    }

    pub fn predict_with_prior(
        &self,
        x_star: &DMatrix<f64>,
        prior_at_star: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if prior_at_star.len() != x_star.nrows() {
            return Err(Error::DimensionMismatch { expected: x_star.nrows(), got: prior_at_star.len() });
        }
        Ok(prior_at_star + self.correction(x_star)?)
    }

    /// The data-driven part of the posterior mean, `k(X*, X) * dual`.
    pub fn correction(&self, x_star: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_dim(x_star)?;
        Ok(gram(&self.kernel, x_star, &self.x_train)? * &self.dual)
    }

    /// Posterior variance of the latent function at each test input.
    pub fn predict_variance(&self, x_star: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_dim(x_star)?;
        let cross = gram(&self.kernel, &self.x_train, x_star)?;
        let v = self.chol.solve_lower_triangular(&cross).expect("cholesky factor has a nonzero diagonal");
        let rows = crate::kernels::rows(x_star);
        Ok(DVector::from_fn(x_star.nrows(), |j, _| {
            let prior_var = self.kernel.call(&rows[j], &rows[j]);
            (prior_var - v.column(j).norm_squared()).max(0.0)
        }))
    }

    fn check_dim(&self, x_star: &DMatrix<f64>) -> Result<()> {
        if x_star.ncols() != self.x_train.ncols() {
            return Err(Error::DimensionMismatch { expected: self.x_train.ncols(), got: x_star.ncols() });
        }
        Ok(())
    }

    pub fn x_train(&self) -> &DMatrix<f64> {
        &self.x_train
    }

    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    /// Lower-triangular factor of `K + (sigma_n^2 + jitter) I`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn dual(&self) -> &DVector<f64> {
        &self.dual
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn prior(&self) -> &PriorMean {
        &self.prior
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
    }

    fn zero_prior(d: usize) -> PriorMean {
        PriorMean::Linear(LinearPrior::constant(d, 0.0))
    }

    #[test]
    fn exact_linear_data() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_column_slice(&[2.0, 4.0, 6.0]);
        let p = fit_linear(&x, &y, 0.0).unwrap();
        assert!((p.weights[0] - 2.0).abs() < 1e-12);
        assert!(p.bias.abs() < 1e-12);
    }

    #[test]
    fn constant_targets_give_flat_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 12, 4);
        let y = DVector::from_element(12, 3.25);
        let p = fit_linear(&x, &y, 0.1).unwrap();
        assert!(p.weights.iter().all(|w| w.abs() < 1e-12));
        assert!((p.bias - 3.25).abs() < 1e-12);
    }

    /// Augmented normal equations `[X 1]^T [X 1] + diag(ridge, .., ridge, 0)`,
    /// solved by LU.
    fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> (DVector<f64>, f64) {
        let (n, d) = x.shape();
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[(i, j)] } else { 1.0 });
        let mut ata = a.transpose() * &a;
        for j in 0..d {
            ata[(j, j)] += ridge;
        }
        let sol = ata.lu().solve(&(a.transpose() * y)).unwrap();
        (sol.rows(0, d).into_owned(), sol[d])
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 20, 5);
        let y = random_vector(&mut rng, 20);
        let p = fit_linear(&x, &y, 1e-3).unwrap();
        let (w, b) = normal_equations(&x, &y, 1e-3);
        for j in 0..5 {
            assert!((p.weights[j] - w[j]).abs() < 1e-8);
        }
        assert!((p.bias - b).abs() < 1e-8);
    }

    #[test]
    fn rank_deficient_design_gives_minimum_norm() {
        // Two identical columns: the minimum-norm solution splits the weight.
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_column_slice(&[1.0, 3.0, 5.0, 7.0]);
        let p = fit_linear(&x, &y, 0.0).unwrap();
        assert!((p.weights[0] - 1.0).abs() < 1e-10);
        assert!((p.weights[1] - 1.0).abs() < 1e-10);
        assert!((p.bias - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_point_fit() {
        let x = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let y = DVector::from_element(1, 2.0);
        let prior = PriorMean::Linear(LinearPrior { weights: vec![1.0, 0.0], bias: 0.25 });
        let m = gp_fit(&x, &y, KernelSpec::sqrt_rbf(1.0).unwrap(), prior, 0.0).unwrap();
        assert_eq!(m.chol()[(0, 0)], 1.0);
        assert_eq!(m.dual()[0], 2.0 - 0.75);
        assert_eq!(m.jitter_used(), 0.0);
    }

    #[test]
    fn interpolates_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 15, 3);
        let y = random_vector(&mut rng, 15);
        let prior = fit_prior_linear(&x, &y, 1e-3).unwrap();
        let m = gp_fit(&x, &y, KernelSpec::sqrt_rbf(2.0).unwrap(), prior, 0.0).unwrap();
        assert!(m.jitter_used() <= 1e-8);
        let pred = m.predict(&x).unwrap();
        assert!((pred - &y).amax() < 1e-6);
    }

    #[test]
    fn far_points_fall_back_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 8, 2);
        let y = random_vector(&mut rng, 8);
        let prior = PriorMean::Linear(LinearPrior { weights: vec![0.0, 0.0], bias: 0.7 });
        let m = gp_fit(&x, &y, KernelSpec::sqrt_rbf(1.0).unwrap(), prior, 1e-6).unwrap();
        let far = DMatrix::from_row_slice(1, 2, &[1e6, -1e6]);
        assert!(m.correction(&far).unwrap()[0].abs() < 1e-10);
        assert!((m.predict(&far).unwrap()[0] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn dual_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 10, 4);
        let y = random_vector(&mut rng, 10);
        let kernel = KernelSpec::sqrt_rbf(1.5).unwrap();
        let m = gp_fit(&x, &y, kernel.clone(), zero_prior(4), 1e-3).unwrap();
        let mut k = gram(&kernel, &x, &x).unwrap();
        for i in 0..10 {
            k[(i, i)] += 1e-3 + m.jitter_used();
        }
        let dense = k.clone().lu().solve(&y).unwrap();
        assert!((m.dual() - &dense).norm() / dense.norm() < 1e-8);
        let recon = m.chol() * m.chol().transpose();
        assert!((recon - &k).norm() / k.norm() < 1e-8);
    }

    /// Posterior mean computed with an explicit inverse.
    fn explicit_posterior(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        xs: &DMatrix<f64>,
        kernel: &KernelSpec,
        prior: &LinearPrior,
        noise: f64,
    ) -> DVector<f64> {
        let mut k = DMatrix::from_fn(x.nrows(), x.nrows(), |i, j| {
            kernel.call(
                &x.row(i).iter().copied().collect::<Vec<_>>(),
                &x.row(j).iter().copied().collect::<Vec<_>>(),
            )
        });
        for i in 0..x.nrows() {
            k[(i, i)] += noise;
        }
        let ks = DMatrix::from_fn(xs.nrows(), x.nrows(), |i, j| {
            kernel.call(
                &xs.row(i).iter().copied().collect::<Vec<_>>(),
                &x.row(j).iter().copied().collect::<Vec<_>>(),
            )
        });
        let mean = |m: &DMatrix<f64>| {
            DVector::from_fn(m.nrows(), |i, _| {
                m.row(i).iter().zip(&prior.weights).map(|(a, b)| a * b).sum::<f64>() + prior.bias
            })
        };
        mean(xs) + ks * k.try_inverse().unwrap() * (y - mean(x))
    }

    #[test]
    fn matches_explicit_inverse_small_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 5, 3);
        let y = random_vector(&mut rng, 5);
        let xs = random_matrix(&mut rng, 3, 3);
        let kernel = KernelSpec::ensemble(0.4, 0.6, 1.2, vec![0.5, 1.0, 2.0]).unwrap();
        let lp = fit_linear(&x, &y, 0.01).unwrap();
        let m = gp_fit(&x, &y, kernel.clone(), PriorMean::Linear(lp.clone()), 1e-4).unwrap();
        let expected = explicit_posterior(&x, &y, &xs, &kernel, &lp, 1e-4);
        let got = m.predict(&xs).unwrap();
        assert!((&got - &expected).norm() / expected.norm() < 1e-8);
    }

    #[test]
    fn zero_residuals_reproduce_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 9, 2);
        let lp = LinearPrior { weights: vec![0.3, -1.1], bias: 0.5 };
        let y = lp.evaluate(&x).unwrap();
        let m =
            gp_fit(&x, &y, KernelSpec::sqrt_rbf(1.0).unwrap(), PriorMean::Linear(lp.clone()), 1e-6).unwrap();
        let xs = random_matrix(&mut rng, 6, 2);
        assert!((m.predict(&xs).unwrap() - lp.evaluate(&xs).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn variance_vanishes_at_training_points_and_grows_away() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 6, 2);
        let y = random_vector(&mut rng, 6);
        let m = gp_fit(&x, &y, KernelSpec::sqrt_rbf(1.0).unwrap(), zero_prior(2), 0.0).unwrap();
        assert!(m.predict_variance(&x).unwrap().amax() < 1e-6);
        let far = DMatrix::from_row_slice(1, 2, &[1e6, 1e6]);
        assert!((m.predict_variance(&far).unwrap()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn external_prior_needs_values() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0]);
        let ext = PriorMean::External { source: "avg".into() };
        assert!(gp_fit(&x, &y, KernelSpec::sqrt_rbf(1.0).unwrap(), ext.clone(), 0.0).is_err());
        let pm = DVector::from_column_slice(&[0.5, 0.5]);
        let m = GpModel::fit_with_prior_values(&x, &y, &pm, KernelSpec::sqrt_rbf(1.0).unwrap(), ext, 0.0)
            .unwrap();
        let p = m.predict_with_prior(&x, &pm).unwrap();
        assert!((p - y).amax() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0]);
        let k = KernelSpec::sqrt_rbf(1.0).unwrap();
        assert!(gp_fit(&x, &y, k.clone(), zero_prior(1), -1.0).is_err());
        assert!(gp_fit(&x, &DVector::zeros(3), k.clone(), zero_prior(1), 0.0).is_err());
        let m = gp_fit(&x, &y, k, zero_prior(1), 0.0).unwrap();
        assert!(matches!(m.predict(&DMatrix::zeros(1, 2)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn jitter_rescues_duplicate_points() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 2.0]);
        let y = DVector::from_column_slice(&[1.0, 1.0, 0.0]);
        let m = gp_fit(&x, &y, KernelSpec::sqrt_rbf(1.0).unwrap(), zero_prior(1), 0.0).unwrap();
        assert!(m.jitter_used() > 0.0);
        assert!(m.jitter_used() <= MAX_JITTER);
    }

    #[test]
    fn indefinite_matrix_reports_final_jitter() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match factor_with_jitter(&a) {
            Err(Error::NotPositiveDefinite { jitter }) => assert_eq!(jitter, MAX_JITTER),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Each extra noisy observation of the test point's true value pulls
        /// the posterior mean toward it.
        #[test]
        fn duplicates_shrink_error(seed in any::<u64>(), target in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = random_matrix(&mut rng, 8, 2);
            let mut y = random_vector(&mut rng, 8);
            let xs = random_matrix(&mut rng, 1, 2);
            let kernel = KernelSpec::sqrt_rbf(1.0).unwrap();
            let mut last = f64::INFINITY;
            for _ in 0..4 {
                let m = gp_fit(&x, &y, kernel.clone(), zero_prior(2), 0.05).unwrap();
                let err = (m.predict(&xs).unwrap()[0] - target).abs();
                prop_assert!(err <= last + 1e-9, "{err} > {last}");
                last = err;
                let r = x.nrows();
                x = x.insert_row(r, 0.0);
                x.set_row(r, &xs.row(0));
                y = y.push(target);
            }
        }

        #[test]
        fn cholesky_path_equals_explicit_inverse(seed in any::<u64>(), n in 1usize..20, noise in 1e-6f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, n, 3);
            let y = random_vector(&mut rng, n);
            let xs = random_matrix(&mut rng, 4, 3);
            let kernel = KernelSpec::sqrt_rbf(2.0).unwrap();
            let lp = fit_linear(&x, &y, 1e-3).unwrap();
            let m = gp_fit(&x, &y, kernel.clone(), PriorMean::Linear(lp.clone()), noise).unwrap();
            prop_assume!(m.jitter_used() == 0.0);
            let expected = explicit_posterior(&x, &y, &xs, &kernel, &lp, noise);
            let got = m.predict(&xs).unwrap();
            prop_assert!((&got - &expected).norm() <= 1e-8 * expected.norm().max(1e-12));
        }
    }
}

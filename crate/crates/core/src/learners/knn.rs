use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Hamming,
}

impl Metric {
    /// A monotone stand-in for the distance (squared for Euclidean).
    fn key(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Hamming => a.iter().zip(b).filter(|(x, y)| x != y).count() as f64,
        }
    }
}

/// Unweighted k-nearest-neighbour regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    x_train: DMatrix<f64>,
    y_train: Vec<f64>,
    k: usize,
    metric: Metric,
}

pub fn knn_fit(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, metric: Metric) -> Result<KnnModel> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("knn needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    Ok(KnnModel { x_train: x.clone(), y_train: y.iter().copied().collect(), k, metric })
}

/// Mean target of the `k` nearest training points; equal distances are
/// resolved in favour of the lower training index.
pub fn knn_predict(model: &KnnModel, x_star: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x_star.ncols() != model.x_train.ncols() {
        return Err(Error::DimensionMismatch { expected: model.x_train.ncols(), got: x_star.ncols() });
    }
    let train = rows(&model.x_train);
    let queries = rows(x_star);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    Ok(DVector::from_iterator(
        queries.len(),
        queries.iter().map(|q| {
            order.clear();
            order.extend(train.iter().enumerate().map(|(i, t)| (model.metric.key(q, t), i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order[..model.k].iter().map(|&(_, i)| model.y_train[i]).sum::<f64>() / model.k as f64
        }),
    ))
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k_equal_n_predicts_the_mean() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 6.0]);
        let m = knn_fit(&x, &y, 4, Metric::Euclidean).unwrap();
        let p = knn_predict(&m, &DMatrix::from_row_slice(2, 1, &[-5.0, 9.0])).unwrap();
        assert_eq!(p.as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn exact_match_with_k_one() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_column_slice(&[5.0, 6.0, 7.0]);
        let m = knn_fit(&x, &y, 1, Metric::Hamming).unwrap();
        let p = knn_predict(&m, &DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(p[0], 6.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Both training points are at distance 1 from the query.
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let y = DVector::from_column_slice(&[10.0, 20.0]);
        let m = knn_fit(&x, &y, 1, Metric::Euclidean).unwrap();
        assert_eq!(knn_predict(&m, &DMatrix::from_element(1, 1, 0.0)).unwrap()[0], 10.0);
    }

    #[test]
    fn rejects_bad_k_and_dims() {
        let x = DMatrix::zeros(2, 1);
        let y = DVector::zeros(2);
        assert!(knn_fit(&x, &y, 3, Metric::Euclidean).is_err());
        assert!(knn_fit(&x, &y, 0, Metric::Euclidean).is_err());
        let m = knn_fit(&x, &y, 1, Metric::Euclidean).unwrap();
        assert!(knn_predict(&m, &DMatrix::zeros(1, 2)).is_err());
    }

    /// Full sort of true Euclidean distances, index order on ties.
    fn oracle(x: &DMatrix<f64>, y: &DVector<f64>, q: &[f64], k: usize) -> f64 {
        let mut d: Vec<(f64, usize)> = (0..x.nrows())
            .map(|i| {
                let dist = (0..x.ncols()).map(|j| (x[(i, j)] - q[j]).powi(2)).sum::<f64>().sqrt();
                (dist, i)
            })
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64
    }

    #[test]
    fn matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let m = knn_fit(&x, &y, 3, Metric::Euclidean).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = knn_predict(&m, &DMatrix::from_row_slice(1, 3, &q)).unwrap()[0];
            assert!((p - oracle(&x, &y, &q, 3)).abs() < 1e-15);
        }
    }

    #[test]
    fn permutation_invariant_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let perm = [3, 1, 4, 0, 9, 2, 6, 5, 8, 7];
        let xp = DMatrix::from_fn(10, 2, |i, j| x[(perm[i], j)]);
        let yp = DVector::from_fn(10, |i, _| y[perm[i]]);
        let q = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let a = knn_predict(&knn_fit(&x, &y, 4, Metric::Euclidean).unwrap(), &q).unwrap();
        let b = knn_predict(&knn_fit(&xp, &yp, 4, Metric::Euclidean).unwrap(), &q).unwrap();
        assert!((a - b).amax() < 1e-15);
    }
}

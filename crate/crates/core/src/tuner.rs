//! Bayesian optimization of the weighted-kernel diagonal.
//!
//! A Latin-hypercube design seeds the search. Each further step fits a GP
//! surrogate (SqrtRbf, length 1) to the standardized objective values over
//! bound-normalized points and evaluates the best of 1024 random candidates
//! under expected improvement. The objective is the Kendall tau of a
//! weighted-kernel GP-NAS model, averaged over held-out splits by default.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TaskConfig;
use crate::data::{split, TaskDataset};
use crate::error::{Error, Result};
use crate::gp::{gp_fit, LinearPrior, PriorMean};
use crate::kernels::KernelSpec;
use crate::labels::{dataset_scores, norm_cdf, norm_pdf, oriented_labels};
use crate::metrics::kendall_tau;

const CANDIDATES: usize = 1024;
const SURROGATE_NOISE: f64 = 1e-6;
/// Objective value recorded for a point whose evaluation failed.
pub const FAILED_VALUE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean tau on the held-out part of several train/validation splits.
    #[default]
    ValidationTau,
    /// Tau on the training data itself.
    TrainingTau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub dims: usize,
    pub bounds: Vec<(f64, f64)>,
    pub budget: usize,
    pub init_points: usize,
    pub seed: u64,
    pub objective: Objective,
    pub splits: usize,
    pub train_fraction: f64,
}

impl TuneSpec {
    /// Defaults: bounds `[0, 1]`, 10 initial points, 60 evaluations, 3 splits
    /// at 80/20.
    pub fn new(dims: usize, seed: u64) -> TuneSpec {
        TuneSpec {
            dims,
            bounds: vec![(0.0, 1.0); dims],
            budget: 60,
            init_points: 10,
            seed,
            objective: Objective::ValidationTau,
            splits: 3,
            train_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("tune spec: {m}")));
        if self.dims == 0 {
            return bad("dims must be >= 1".into());
        }
        if self.bounds.len() != self.dims {
            return bad(format!("{} bounds for {} dims", self.bounds.len(), self.dims));
        }
        if let Some((lo, hi)) =
            self.bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi && *lo >= 0.0))
        {
            return bad(format!("bound [{lo}, {hi}] must satisfy 0 <= low < high"));
        }
        if self.init_points < 2 || self.budget < self.init_points {
            return bad(format!(
                "need budget >= init_points >= 2, got budget {} init {}",
                self.budget, self.init_points
            ));
        }
        if self.splits == 0 {
            return bad("splits must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub best_point: Vec<f64>,
    pub best_value: f64,
}

impl TuneTrace {
    /// Best value seen after each evaluation.
    pub fn running_best(&self) -> Vec<f64> {
        self.values
            .iter()
            .scan(f64::NEG_INFINITY, |b, &v| {
                *b = b.max(v);
                Some(*b)
            })
            .collect()
    }
}

/// Expected improvement of a Gaussian with the given mean and standard
/// deviation over `best`, for maximization.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let gap = mean - best;
    if std <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    gap * norm_cdf(z) + std * norm_pdf(z)
}

fn config_with(config: &TaskConfig, weights: &[f64]) -> TaskConfig {
    TaskConfig { tuned_weights: Some(weights.to_vec()), ..config.clone() }
}

/// Number of weights tuned for `ds` under `config`.
pub fn weight_dims(ds: &TaskDataset, config: &TaskConfig) -> Result<usize> {
    if config.weights_per_bit {
        config.encoding().width(&ds.cardinalities)
    } else {
        Ok(ds.dim())
    }
}

/// Tau on `test` of a GP fitted to `train` with the weighted kernel under
/// `weights`. The prior is the constant training mean, so the kernel alone
/// carries the structure.
pub fn weighted_gp_tau(
    train: &TaskDataset,
    test: &TaskDataset,
    config: &TaskConfig,
    weights: &[f64],
) -> Result<f64> {
    let cfg = config_with(config, weights);
    let cards = &train.cardinalities;
    let kernel = KernelSpec::weighted(cfg.kernel_length, cfg.kernel_weights(cards)?)?;
    let enc = cfg.encoding();
    let y = DVector::from_vec(dataset_scores(train, &cfg.label_dist)?);
    let x = enc.matrix(&train.features(), cards)?;
    let prior = PriorMean::Linear(LinearPrior::constant(x.ncols(), y.mean()));
    let model = gp_fit(&x, &y, kernel, prior, cfg.sigma_n2)?;
    let pred = model.predict(&enc.matrix(&test.features(), cards)?)?;
    Ok(kendall_tau(pred.as_slice(), &oriented_labels(test)?)?.tau)
}

/// The tuning objective for `weights`.
pub fn evaluate_weights(
    ds: &TaskDataset,
    config: &TaskConfig,
    weights: &[f64],
    spec: &TuneSpec,
) -> Result<f64> {
    match spec.objective {
        Objective::TrainingTau => weighted_gp_tau(ds, ds, config, weights),
        Objective::ValidationTau => {
            let mut total = 0.0;
            for s in 0..spec.splits {
                let plan = split(ds, spec.train_fraction, spec.seed.wrapping_add(s as u64))?;
                total += weighted_gp_tau(
                    &ds.subset(&plan.train_indices),
                    &ds.subset(&plan.validation_indices),
                    config,
                    weights,
                )?;
            }
            Ok(total / spec.splits as f64)
        }
    }
}

fn latin_hypercube(n: usize, spec: &TuneSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; spec.dims]; n];
    for (j, &(lo, hi)) in spec.bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            p[j] = lo + u * (hi - lo);
        }
    }
    points
}

fn normalize(p: &[f64], spec: &TuneSpec) -> Vec<f64> {
    p.iter().zip(&spec.bounds).map(|(v, (lo, hi))| (v - lo) / (hi - lo)).collect()
}

/// Next point by expected improvement over random candidates. If the
/// surrogate cannot be fitted the first candidate is taken as is.
fn propose(points: &[Vec<f64>], values: &[f64], spec: &TuneSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = spec.dims;
    let candidates: Vec<Vec<f64>> =
        (0..CANDIDATES).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let denormalize = |u: &[f64]| -> Vec<f64> {
        u.iter().zip(&spec.bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let z = DVector::from_iterator(values.len(), values.iter().map(|v| (v - mean) / sd));
    let x = DMatrix::from_fn(points.len(), d, |i, j| normalize(&points[i], spec)[j]);
    let surrogate = KernelSpec::sqrt_rbf(1.0)
        .and_then(|k| gp_fit(&x, &z, k, PriorMean::Linear(LinearPrior::constant(d, 0.0)), SURROGATE_NOISE));
    let Ok(gp) = surrogate else {
        return denormalize(&candidates[0]);
    };
    let c = DMatrix::from_fn(CANDIDATES, d, |i, j| candidates[i][j]);
    let (Ok(mu), Ok(var)) = (gp.predict(&c), gp.predict_variance(&c)) else {
        return denormalize(&candidates[0]);
    };
    let best = z.max();
    let mut pick = 0;
    let mut pick_ei = f64::NEG_INFINITY;
    for i in 0..CANDIDATES {
        let ei = expected_improvement(mu[i], var[i].max(0.0).sqrt(), best);
        if ei > pick_ei {
            pick_ei = ei;
            pick = i;
        }
    }
    denormalize(&candidates[pick])
}

/// Runs the optimization and returns the best weights with the full trace.
/// Failed evaluations score [`FAILED_VALUE`].
pub fn tune_weights(ds: &TaskDataset, config: &TaskConfig, spec: &TuneSpec) -> Result<(Vec<f64>, TuneTrace)> {
    spec.validate()?;
    config.validate()?;
    let expected = weight_dims(ds, config)?;
    if spec.dims != expected {
        return Err(Error::DimensionMismatch { expected, got: spec.dims });
    }
    // Surface unsplittable data before searching.
    if spec.objective == Objective::ValidationTau {
        split(ds, spec.train_fraction, spec.seed)?;
    }
    dataset_scores(ds, &config.label_dist)?;

    let score = |w: &[f64]| evaluate_weights(ds, config, w, spec).unwrap_or(FAILED_VALUE);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = latin_hypercube(spec.init_points, spec, &mut rng);
    // The initial design is evaluated concurrently, gathered in design order.
    let mut values: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = points.iter().map(|p| s.spawn(|| score(p))).collect();
        handles.into_iter().map(|h| h.join().expect("objective thread panicked")).collect()
    });
    while points.len() < spec.budget {
        let next = propose(&points, &values, spec, &mut rng);
        values.push(score(&next));
        points.push(next);
    }

    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let trace = TuneTrace { best_point: points[best].clone(), best_value: values[best], points, values };
    Ok((trace.best_point.clone(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_task, SynthSpec};

    #[test]
    fn expected_improvement_cases() {
        assert_eq!(expected_improvement(0.3, 0.0, 0.5), 0.0);
        assert_eq!(expected_improvement(1.5, 0.0, 0.5), 1.0);
        // phi(0) = 1 / sqrt(2 pi)
        let v = expected_improvement(0.2, 1.0, 0.2);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(expected_improvement(0.0, 1.0, 0.5) < expected_improvement(0.0, 2.0, 0.5));
    }

    #[test]
    fn lhs_covers_each_stratum_once() {
        let spec = TuneSpec { bounds: vec![(0.0, 1.0), (2.0, 4.0)], ..TuneSpec::new(2, 1) };
        let pts = latin_hypercube(8, &spec, &mut ChaCha8Rng::seed_from_u64(0));
        for (j, &(lo, hi)) in spec.bounds.iter().enumerate() {
            let mut strata: Vec<usize> =
                pts.iter().map(|p| ((p[j] - lo) / (hi - lo) * 8.0).floor() as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
    }

    fn small_task(seed: u64) -> TaskDataset {
        synth_task(&SynthSpec {
            n: 40,
            dim: 3,
            cardinality: 3,
            noise: 0.1,
            seed,
            informative: Some(1),
            ..SynthSpec::default()
        })
        .unwrap()
        .dataset
    }

    #[test]
    fn design_only_budget_and_determinism() {
        let ds = small_task(1);
        let cfg = TaskConfig::preset("task0").unwrap();
        let spec = TuneSpec { budget: 4, init_points: 4, ..TuneSpec::new(3, 7) };
        let (w, trace) = tune_weights(&ds, &cfg, &spec).unwrap();
        assert_eq!(trace.points.len(), 4);
        assert_eq!(trace.best_value, trace.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        assert_eq!(w, trace.best_point);

        let spec = TuneSpec { budget: 8, ..spec };
        let (_, a) = tune_weights(&ds, &cfg, &spec).unwrap();
        let (_, b) = tune_weights(&ds, &cfg, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 8);
        for p in &a.points {
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let rb = a.running_best();
        assert!(rb.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*rb.last().unwrap(), a.best_value);
    }

    #[test]
    fn spec_validation() {
        let ds = small_task(2);
        let cfg = TaskConfig::preset("task0").unwrap();
        assert!(tune_weights(&ds, &cfg, &TuneSpec::new(4, 0)).is_err());
        let bad = TuneSpec { init_points: 1, ..TuneSpec::new(3, 0) };
        assert!(bad.validate().is_err());
        let bad = TuneSpec { budget: 5, ..TuneSpec::new(3, 0) };
        assert!(bad.validate().is_err());
        let bad = TuneSpec { bounds: vec![(1.0, 1.0); 3], ..TuneSpec::new(3, 0) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn training_objective_is_available() {
        // Enough distinct rows that near-interpolation reproduces the order.
        let ds = synth_task(&SynthSpec { n: 40, dim: 6, noise: 0.1, seed: 3, ..SynthSpec::default() })
            .unwrap()
            .dataset;
        let cfg = TaskConfig::preset("task0").unwrap();
        let spec = TuneSpec { objective: Objective::TrainingTau, ..TuneSpec::new(6, 0) };
        let train = evaluate_weights(&ds, &cfg, &[1.0; 6], &spec).unwrap();
        let valid = evaluate_weights(&ds, &cfg, &[1.0; 6], &TuneSpec::new(6, 0)).unwrap();
        assert!(train > 0.99, "{train}");
        assert!(valid < train);
    }
}

//! Cumulative ablation ladder on a labelled dataset.
//!
//! Each rung adds one ingredient to the one before it, and every rung is
//! scored by validation Kendall tau over several seeded 80/20 splits.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::TaskConfig;
use crate::data::{split, TaskDataset};
use crate::encoding::FeatureEncoding;
use crate::ensemble::{ensemble_fit, ensemble_predict, fit_gp_nas};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::labels::{dataset_scores, oriented_labels};
use crate::metrics::kendall_tau;
use crate::tuner::{tune_weights, weight_dims, TuneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rung {
    /// GP-NAS on ordinal codes, regressing on raw (negated) ranks.
    Plain,
    /// Same, on the config's k-hot encoding.
    Encoding,
    /// Regressing on transformed scores instead of ranks.
    LabelTransform,
    /// Base-learner ensemble with a plain SqrtRbf final kernel.
    Ensemble,
    /// Ensemble kernel with tuned weights.
    WeightedEnsemble,
}

pub const LADDER: [Rung; 5] =
    [Rung::Plain, Rung::Encoding, Rung::LabelTransform, Rung::Ensemble, Rung::WeightedEnsemble];

impl Rung {
    pub fn label(&self) -> &'static str {
        match self {
            Rung::Plain => "plain GP-NAS",
            Rung::Encoding => "+ encoding",
            Rung::LabelTransform => "+ label transform",
            Rung::Ensemble => "+ ensemble",
            Rung::WeightedEnsemble => "+ weighted ensemble kernel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub seeds: usize,
    /// Split `s` uses seed `seed + s`.
    pub seed: u64,
    pub train_fraction: f64,
    /// Weight tuning for the last rung; `None` keeps the config's weights.
    pub tune_budget: Option<usize>,
    pub tune_init_points: usize,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec { seeds: 5, seed: 0, train_fraction: 0.8, tune_budget: Some(60), tune_init_points: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rung: Rung,
    /// Validation tau per split seed.
    pub taus: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
}

/// Validation tau of one rung fitted on `train`.
pub fn evaluate_rung(
    train: &TaskDataset,
    validation: &TaskDataset,
    config: &TaskConfig,
    rung: Rung,
    spec: &AblationSpec,
    seed: u64,
) -> Result<f64> {
    let truth = oriented_labels(validation)?;
    let cards = &train.cardinalities;
    let gp_nas = |encoding: FeatureEncoding, y: Vec<f64>| -> Result<Vec<f64>> {
        let model = fit_gp_nas(
            &train.features(),
            cards,
            &DVector::from_vec(y),
            encoding,
            KernelSpec::sqrt_rbf(config.kernel_length)?,
            config.prior_ridge,
            config.sigma_n2,
        )?;
        let pred = model.predict(&encoding.matrix(&validation.features(), cards)?)?;
        Ok(pred.iter().copied().collect())
    };
    let pred = match rung {
        Rung::Plain => gp_nas(FeatureEncoding::Ordinal, oriented_labels(train)?)?,
        Rung::Encoding => gp_nas(config.encoding(), oriented_labels(train)?)?,
        Rung::LabelTransform => gp_nas(config.encoding(), dataset_scores(train, &config.label_dist)?)?,
        Rung::Ensemble => {
            let cfg = TaskConfig { beta: None, tuned_weights: None, ..config.clone() };
            ensemble_predict(&ensemble_fit(train, &cfg)?, validation)?.0
        }
        Rung::WeightedEnsemble => {
            let mut cfg = config.clone();
            if let Some(budget) = spec.tune_budget {
                let tune = TuneSpec {
                    budget,
                    init_points: spec.tune_init_points.min(budget),
                    ..TuneSpec::new(weight_dims(train, config)?, seed)
                };
                cfg.tuned_weights = Some(tune_weights(train, config, &tune)?.0);
            }
            ensemble_predict(&ensemble_fit(train, &cfg)?, validation)?.0
        }
    };
    Ok(kendall_tau(&pred, &truth)?.tau)
}

/// Runs every rung on `spec.seeds` splits of `ds`. Splits are processed
/// concurrently; rows come back in ladder order.
pub fn run_ablation(ds: &TaskDataset, config: &TaskConfig, spec: &AblationSpec) -> Result<Vec<AblationRow>> {
    config.validate()?;
    if spec.seeds == 0 {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    let per_seed: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..spec.seeds)
            .map(|i| {
                s.spawn(move || -> Result<Vec<f64>> {
                    let seed = spec.seed.wrapping_add(i as u64);
                    let plan = split(ds, spec.train_fraction, seed)?;
                    let train = ds.subset(&plan.train_indices);
                    let val = ds.subset(&plan.validation_indices);
                    LADDER.iter().map(|&r| evaluate_rung(&train, &val, config, r, spec, seed)).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation thread panicked")).collect()
    });
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(LADDER
        .iter()
        .enumerate()
        .map(|(r, &rung)| {
            let taus: Vec<f64> = per_seed.iter().map(|t| t[r]).collect();
            let n = taus.len() as f64;
            let mean = taus.iter().sum::<f64>() / n;
            let std = if taus.len() > 1 {
                (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            AblationRow { rung, taus, mean, std }
        })
        .collect())
}

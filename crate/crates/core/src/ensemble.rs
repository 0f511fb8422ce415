//! The stacked predictor.
//!
//! Ranks become scores, every configured base learner is fitted on the full
//! training set, and their averaged prediction is the prior mean of a final GP
//! whose kernel is the weighted ensemble kernel. At prediction time the base
//! learners are re-evaluated at the test points to supply the prior, and the
//! final GP adds its residual correction.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{BaseLearner, TaskConfig};
use crate::data::TaskDataset;
use crate::encoding::FeatureEncoding;
use crate::error::{Error, Result};
use crate::gp::{fit_prior_linear, gp_fit, GpModel, PriorMean};
use crate::kernels::KernelSpec;
use crate::labels::{dataset_scores, scores_to_ranks};
use crate::learners::{knn_fit, knn_predict, svr_fit, svr_predict, KnnModel, SvrModel};

pub const MODEL_FORMAT: &str = "gpnas-model";
pub const MODEL_VERSION: &str = "1.0";
const PRIOR_SOURCE: &str = "base-learner mean";

/// A GP with a ridge-fitted linear prior and a SqrtRbf kernel on the given
/// encoding of `rows`.
pub fn fit_gp_nas(
    rows: &[&[u32]],
    cardinalities: &[u32],
    y: &DVector<f64>,
    encoding: FeatureEncoding,
    kernel: KernelSpec,
    ridge: f64,
    sigma_n2: f64,
) -> Result<GpModel> {
    let x = encoding.matrix(rows, cardinalities)?;
    let prior = fit_prior_linear(&x, y, ridge)?;
    gp_fit(&x, y, kernel, prior, sigma_n2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedLearner {
    GpNas {
        encoding: FeatureEncoding,
        model: GpModel,
    },
    Knn {
        encoding: FeatureEncoding,
        model: KnnModel,
    },
    /// Trained on `(y - center) / scale`.
    Svr {
        encoding: FeatureEncoding,
        model: SvrModel<KernelSpec>,
        center: f64,
        scale: f64,
    },
}

impl FittedLearner {
    fn fit(
        learner: BaseLearner,
        rows: &[&[u32]],
        cardinalities: &[u32],
        y: &DVector<f64>,
        config: &TaskConfig,
    ) -> Result<FittedLearner> {
        let rbf = KernelSpec::sqrt_rbf(config.kernel_length)?;
        let gp_nas = |k: usize| -> Result<FittedLearner> {
            let encoding = FeatureEncoding::KHot { k };
            let model = fit_gp_nas(
                rows,
                cardinalities,
                y,
                encoding,
                rbf.clone(),
                config.prior_ridge,
                config.sigma_n2,
            )?;
            Ok(FittedLearner::GpNas { encoding, model })
        };
        match learner {
            BaseLearner::GpNasOneHot => gp_nas(1),
            BaseLearner::GpNasTwoHot => gp_nas(2),
            BaseLearner::Knn => {
                let encoding = config.encoding();
                let x = encoding.matrix(rows, cardinalities)?;
                let k = config.knn.k.min(x.nrows());
                let model = knn_fit(&x, y, k, config.knn.metric)?;
                Ok(FittedLearner::Knn { encoding, model })
            }
            BaseLearner::Svr => {
                let encoding = config.encoding();
                let x = encoding.matrix(rows, cardinalities)?;
                let center = y.mean();
                let sd = y.map(|v| (v - center).powi(2)).mean().sqrt();
                let scale = if sd > 0.0 { sd } else { 1.0 };
                let z = y.map(|v| (v - center) / scale);
                let kernel = KernelSpec::sqrt_rbf(config.svr.length.unwrap_or(config.kernel_length))?;
                let model = svr_fit(&x, &z, kernel, config.svr.params)?;
                Ok(FittedLearner::Svr { encoding, model, center, scale })
            }
        }
    }

    pub fn predict(&self, rows: &[&[u32]], cardinalities: &[u32]) -> Result<DVector<f64>> {
        match self {
            FittedLearner::GpNas { encoding, model } => model.predict(&encoding.matrix(rows, cardinalities)?),
            FittedLearner::Knn { encoding, model } => {
                knn_predict(model, &encoding.matrix(rows, cardinalities)?)
            }
            FittedLearner::Svr { encoding, model, center, scale } => {
                Ok(svr_predict(model, &encoding.matrix(rows, cardinalities)?)?.map(|v| v * scale + center))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    config: TaskConfig,
    cardinalities: Vec<u32>,
    learners: Vec<(BaseLearner, FittedLearner)>,
    final_encoding: FeatureEncoding,
    final_gp: GpModel,
}

/// The two halves of a final-GP prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionParts {
    /// Mean of the base-learner predictions.
    pub prior: DVector<f64>,
    /// The final GP's residual correction.
    pub correction: DVector<f64>,
}

impl PredictionParts {
    pub fn scores(&self) -> DVector<f64> {
        &self.prior + &self.correction
    }
}

pub fn ensemble_fit(ds: &TaskDataset, config: &TaskConfig) -> Result<EnsembleModel> {
    config.validate()?;
    let y = DVector::from_vec(dataset_scores(ds, &config.label_dist).map_err(|e| e.in_stage("labels"))?);
    let rows = ds.features();
    let cards = ds.cardinalities.as_slice();

    // Base learners are independent; results are gathered in config order.
    let fitted: Vec<Result<FittedLearner>> = std::thread::scope(|s| {
        let handles: Vec<_> = config
            .base_learners
            .iter()
            .map(|&l| {
                let (rows, y) = (&rows, &y);
                s.spawn(move || {
                    FittedLearner::fit(l, rows, cards, y, config).map_err(|e| e.in_stage(l.name()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("base learner thread panicked")).collect()
    });
    let learners = config
        .base_learners
        .iter()
        .copied()
        .zip(fitted)
        .map(|(l, f)| f.map(|f| (l, f)))
        .collect::<Result<Vec<_>>>()?;

    let prior_at_x = mean_prediction(&learners, &rows, cards)?;
    let final_encoding = config.encoding();
    let fit_final = || -> Result<GpModel> {
        let x = final_encoding.matrix(&rows, cards)?;
        let kernel = match config.beta {
            Some((b1, b2)) => {
                KernelSpec::ensemble(b1, b2, config.kernel_length, config.kernel_weights(cards)?)?
            }
            None => KernelSpec::sqrt_rbf(config.kernel_length)?,
        };
        let prior = PriorMean::External { source: PRIOR_SOURCE.into() };
        GpModel::fit_with_prior_values(&x, &y, &prior_at_x, kernel, prior, config.sigma_n2)
    };
    let final_gp = fit_final().map_err(|e| e.in_stage("final-gp"))?;
    Ok(EnsembleModel {
        config: config.clone(),
        cardinalities: ds.cardinalities.clone(),
        learners,
        final_encoding,
        final_gp,
    })
}

fn mean_prediction(
    learners: &[(BaseLearner, FittedLearner)],
    rows: &[&[u32]],
    cards: &[u32],
) -> Result<DVector<f64>> {
    let mut sum = DVector::zeros(rows.len());
    for (l, f) in learners {
        sum += f.predict(rows, cards).map_err(|e| e.in_stage(l.name()))?;
    }
    Ok(sum / learners.len() as f64)
}

/// Scores and competition ranks (1 = best) for every record of `test`, in
/// record order. Labels on `test` are ignored.
pub fn ensemble_predict(model: &EnsembleModel, test: &TaskDataset) -> Result<(Vec<f64>, Vec<u32>)> {
    let scores: Vec<f64> = model.predict_parts(test)?.scores().iter().copied().collect();
    let ranks = scores_to_ranks(&scores)?;
    Ok((scores, ranks))
}

impl EnsembleModel {
    pub fn predict_parts(&self, test: &TaskDataset) -> Result<PredictionParts> {
        if test.dim() != self.cardinalities.len() {
            return Err(Error::DimensionMismatch { expected: self.cardinalities.len(), got: test.dim() });
        }
        let rows = test.features();
        let cards = self.cardinalities.as_slice();
        let prior = mean_prediction(&self.learners, &rows, cards)?;
        let x = self.final_encoding.matrix(&rows, cards)?;
        let correction = self.final_gp.correction(&x).map_err(|e| e.in_stage("final-gp"))?;
        Ok(PredictionParts { prior, correction })
    }

    /// Base-learner predictions, one vector per learner in config order.
    pub fn base_predictions(&self, test: &TaskDataset) -> Result<Vec<DVector<f64>>> {
        let rows = test.features();
        self.learners.iter().map(|(_, f)| f.predict(&rows, &self.cardinalities)).collect()
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn cardinalities(&self) -> &[u32] {
        &self.cardinalities
    }

    pub fn learners(&self) -> &[(BaseLearner, FittedLearner)] {
        &self.learners
    }

    pub fn final_gp(&self) -> &GpModel {
        &self.final_gp
    }

    pub fn final_matrix(&self, test: &TaskDataset) -> Result<DMatrix<f64>> {
        self.final_encoding.matrix(&test.features(), &self.cardinalities)
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: String,
    model: T,
}

pub fn model_to_json(model: &EnsembleModel) -> String {
    let env = Envelope { format: MODEL_FORMAT.to_string(), version: MODEL_VERSION.to_string(), model };
    serde_json::to_string(&env).expect("model serializes")
}

/// Reads a model envelope. Files from a newer major version are rejected.
pub fn model_from_json(text: &str) -> Result<EnsembleModel> {
    let env: Envelope<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("not a model file: {e}")))?;
    if env.format != MODEL_FORMAT {
        return Err(Error::Format(format!("expected format '{MODEL_FORMAT}', found '{}'", env.format)));
    }
    let major = |v: &str| v.split('.').next().and_then(|m| m.parse::<u32>().ok());
    let ours = major(MODEL_VERSION).expect("valid version constant");
    match major(&env.version) {
        Some(m) if m <= ours => {}
        Some(m) => {
            return Err(Error::Format(format!(
                "model version {} has major {m}, newer than supported {MODEL_VERSION}",
                env.version
            )))
        }
        None => return Err(Error::Format(format!("bad model version '{}'", env.version))),
    }
    let model: EnsembleModel =
        serde_json::from_value(env.model).map_err(|e| Error::Format(format!("model body: {e}")))?;
    model.config.validate()?;
    model.final_gp.kernel().validate()?;
    Ok(model)
}

pub fn save_model(model: &EnsembleModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

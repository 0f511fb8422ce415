//! Per-task pipeline configuration and the built-in presets.

use serde::{Deserialize, Serialize};

use crate::encoding::FeatureEncoding;
use crate::error::{Error, Result};
use crate::gp::DEFAULT_NOISE;
use crate::labels::ScoreDistribution;
use crate::learners::{Metric, SvrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLearner {
    GpNasOneHot,
    GpNasTwoHot,
    Knn,
    Svr,
}

impl BaseLearner {
    pub fn name(&self) -> &'static str {
        match self {
            BaseLearner::GpNasOneHot => "gp_nas_one_hot",
            BaseLearner::GpNasTwoHot => "gp_nas_two_hot",
            BaseLearner::Knn => "knn",
            BaseLearner::Svr => "svr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnSettings {
    /// Clamped to the training size at fit time.
    pub k: usize,
    pub metric: Metric,
}

impl Default for KnnSettings {
    fn default() -> Self {
        KnnSettings { k: 5, metric: Metric::Euclidean }
    }
}

#[derive(Default, Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrSettings {
    #[serde(flatten)]
    pub params: SvrParams,
    /// Kernel length for the SVR's SqrtRbf kernel; `None` uses `kernel_length`.
    pub length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub name: String,
    pub kernel_length: f64,
    /// `(beta1, beta2)`; absent means the final kernel is plain SqrtRbf.
    pub beta: Option<(f64, f64)>,
    pub label_dist: ScoreDistribution,
    pub base_learners: Vec<BaseLearner>,
    /// `k` of the k-hot encoder used by KNN, SVR and the final GP.
    pub encoder_k: usize,
    /// Weighted-kernel diagonal, one entry per feature column unless
    /// `weights_per_bit` is set. Absent means all ones.
    pub tuned_weights: Option<Vec<f64>>,
    pub weights_per_bit: bool,
    pub sigma_n2: f64,
    /// Ridge penalty of the GP-NAS linear prior.
    pub prior_ridge: f64,
    pub knn: KnnSettings,
    pub svr: SvrSettings,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            name: "custom".into(),
            kernel_length: 22.0,
            beta: Some((0.5, 0.5)),
            label_dist: ScoreDistribution::standard_normal(),
            base_learners: vec![BaseLearner::GpNasOneHot, BaseLearner::GpNasTwoHot],
            encoder_k: 2,
            tuned_weights: None,
            weights_per_bit: false,
            sigma_n2: DEFAULT_NOISE,
            prior_ridge: 1e-3,
            knn: KnnSettings::default(),
            svr: SvrSettings::default(),
        }
    }
}

pub const PRESET_NAMES: [&str; 8] = ["task0", "task1", "task2", "task3", "task4", "task5", "task6", "task7"];

impl TaskConfig {
    /// One of the eight per-task presets, `task0` to `task7`.
    pub fn preset(name: &str) -> Option<TaskConfig> {
        use BaseLearner::*;
        let normal = ScoreDistribution::standard_normal();
        let skewed = ScoreDistribution::default_left_skewed();
        let (length, beta, dist, extra, encoder_k) = match name {
            "task0" => (22.0, Some((0.18, 0.82)), normal, Some(Knn), 2),
            "task1" => (28.0, Some((0.62, 0.38)), skewed, Some(Svr), 2),
            "task2" => (24.0, Some((0.02, 0.98)), skewed, Some(Svr), 2),
            "task3" => (25.0, Some((0.6, 0.4)), normal, Some(Svr), 2),
            "task4" => (22.0, Some((0.7, 0.3)), skewed, Some(Svr), 2),
            "task5" => (22.0, Some((0.3, 0.7)), normal, Some(Svr), 2),
            "task6" => (22.0, None, normal, None, 9),
            "task7" => (22.0, Some((0.3, 0.7)), normal, Some(Svr), 2),
            _ => return None,
        };
        let mut base_learners = vec![GpNasOneHot, GpNasTwoHot];
        base_learners.extend(extra);
        Some(TaskConfig {
            name: name.into(),
            kernel_length: length,
            beta,
            label_dist: dist,
            base_learners,
            encoder_k,
            ..TaskConfig::default()
        })
    }

    pub fn from_json(text: &str) -> Result<TaskConfig> {
        let cfg: TaskConfig = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("config '{}': {msg}", self.name)));
        if !(self.kernel_length.is_finite() && self.kernel_length > 0.0) {
            return bad(format!("kernel_length {} must be > 0", self.kernel_length));
        }
        if let Some((b1, b2)) = self.beta {
            if !(b1.is_finite() && b2.is_finite() && b1 >= 0.0 && b2 >= 0.0 && b1 + b2 > 0.0) {
                return bad(format!("beta ({b1}, {b2}) must be non-negative with positive sum"));
            }
        }
        if self.base_learners.is_empty() {
            return bad("base_learners must not be empty".into());
        }
        if self.encoder_k == 0 {
            return bad("encoder_k must be >= 1".into());
        }
        if let Some(w) = &self.tuned_weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("tuned_weights must be finite and >= 0".into());
            }
        }
        if !(self.sigma_n2.is_finite() && self.sigma_n2 >= 0.0) {
            return bad(format!("sigma_n2 {} must be >= 0", self.sigma_n2));
        }
        if !(self.prior_ridge.is_finite() && self.prior_ridge >= 0.0) {
            return bad(format!("prior_ridge {} must be >= 0", self.prior_ridge));
        }
        if self.knn.k == 0 {
            return bad("knn.k must be >= 1".into());
        }
        if let Some(l) = self.svr.length {
            if !(l.is_finite() && l > 0.0) {
                return bad(format!("svr.length {l} must be > 0"));
            }
        }
        self.label_dist.validate()
    }

    pub fn encoding(&self) -> FeatureEncoding {
        FeatureEncoding::KHot { k: self.encoder_k }
    }

    /// Weighted-kernel diagonal expanded to encoded coordinates.
    pub fn kernel_weights(&self, cardinalities: &[u32]) -> Result<Vec<f64>> {
        let enc = self.encoding();
        match &self.tuned_weights {
            None => Ok(vec![1.0; enc.width(cardinalities)?]),
            Some(w) if self.weights_per_bit => {
                let width = enc.width(cardinalities)?;
                if w.len() != width {
                    return Err(Error::DimensionMismatch { expected: width, got: w.len() });
                }
                Ok(w.clone())
            }
            Some(w) => enc.expand_column_weights(w, cardinalities),
        }
    }
}

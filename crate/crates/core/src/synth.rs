//! Synthetic ranking tasks with a known latent score.
//!
//! Features are uniform over `0..cardinality`. The clean latent score is a
//! fixed random positive-coefficient linear function of the feature values
//! (zero on the non-informative columns) plus an optional product term on the
//! first two columns. Label noise is Gaussian with standard deviation
//! `noise * std(clean)`. Ranks come from the noisy latent; the clean latent is
//! the ground truth.
//!
//! Coefficients are drawn before any row, so a larger `n` with the same seed
//! extends the same task with extra rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ArchRecord, LabelKind, TaskDataset};
use crate::error::{Error, Result};
use crate::labels::scores_to_ranks;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    pub cardinality: u32,
    /// Noise standard deviation as a fraction of the clean signal's.
    pub noise: f64,
    pub seed: u64,
    /// Only the first `informative` columns carry signal; `None` means all.
    pub informative: Option<usize>,
    /// Weight of the `x0 * x1` term, relative to the mean linear coefficient.
    pub interaction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n: 200, dim: 8, cardinality: 4, noise: 0.0, seed: 0, informative: None, interaction: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    /// Rank labels, 1 = best.
    pub dataset: TaskDataset,
    /// Clean latent score per record.
    pub truth: Vec<f64>,
    /// Latent score the ranks were computed from.
    pub noisy: Vec<f64>,
}

pub fn synth_task(spec: &SynthSpec) -> Result<SynthTask> {
    if spec.n < 4 {
        return Err(Error::InvalidArgument(format!("synthetic n = {} must be >= 4", spec.n)));
    }
    if spec.dim == 0 || spec.cardinality < 2 {
        return Err(Error::InvalidArgument("synthetic tasks need dim >= 1 and cardinality >= 2".into()));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) || !spec.interaction.is_finite() {
        return Err(Error::InvalidArgument("noise must be >= 0 and interaction finite".into()));
    }
    let informative = spec.informative.unwrap_or(spec.dim);
    if informative == 0 || informative > spec.dim {
        return Err(Error::InvalidArgument(format!(
            "informative = {informative} must lie in 1..={}",
            spec.dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coef: Vec<f64> = (0..spec.dim)
        .map(|j| {
            let c = rng.random_range(0.5..1.5);
            if j < informative {
                c
            } else {
                0.0
            }
        })
        .collect();
    let mean_coef = coef[..informative].iter().sum::<f64>() / informative as f64;
    let features: Vec<Vec<u32>> =
        (0..spec.n).map(|_| (0..spec.dim).map(|_| rng.random_range(0..spec.cardinality)).collect()).collect();
    let truth: Vec<f64> = features
        .iter()
        .map(|f| {
            let linear: f64 = f.iter().zip(&coef).map(|(&v, c)| v as f64 * c).sum();
            let pair = if spec.dim >= 2 { f[0] as f64 * f[1] as f64 } else { 0.0 };
            linear + spec.interaction * mean_coef * pair
        })
        .collect();
    let mean = truth.iter().sum::<f64>() / spec.n as f64;
    let sd = (truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / spec.n as f64).sqrt();
    let noisy: Vec<f64> = truth
        .iter()
        .map(|t| {
            let z: f64 = rng.sample(StandardNormal);
            t + spec.noise * sd * z
        })
        .collect();
    let ranks = scores_to_ranks(&noisy)?;
    let records = features
        .into_iter()
        .zip(ranks)
        .map(|(features, r)| ArchRecord { features, label: Some(r as f64) })
        .collect();
    let dataset = TaskDataset::new(0, records, Some(vec![spec.cardinality; spec.dim]), LabelKind::Rank)?;
    Ok(SynthTask { dataset, truth, noisy })
}

/// `index,score` lines for a ground-truth sidecar.
pub fn truth_to_csv(truth: &[f64]) -> String {
    let mut out = String::from("index,score\n");
    for (i, t) in truth.iter().enumerate() {
        out.push_str(&format!("{i},{t}\n"));
    }
    out
}

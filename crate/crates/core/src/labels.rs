//! Rank labels to real-valued scores and back.
//!
//! A rank `r` among `n` is sent through the inverse CDF of the chosen score
//! distribution at quantile `(n - r + 0.5) / n`, so the best rank gets the
//! highest score and the scores trace out the distribution's shape
//! deterministically.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{LabelKind, TaskDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScoreDistribution {
    Normal {
        mu: f64,
        sigma: f64,
    },
    /// Skew-normal with negative shape.
    LeftSkewed {
        location: f64,
        scale: f64,
        shape: f64,
    },
}

impl Default for ScoreDistribution {
    fn default() -> Self {
        ScoreDistribution::standard_normal()
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile: a rational-approximation start polished by
/// Newton steps against [`norm_cdf`].
pub fn norm_quantile(p: f64) -> f64 {
    let mut x = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p);
    for _ in 0..3 {
        let d = norm_pdf(x);
        if d == 0.0 {
            break;
        }
        x -= (norm_cdf(x) - p) / d;
    }
    x
}

impl ScoreDistribution {
    pub fn standard_normal() -> ScoreDistribution {
        ScoreDistribution::Normal { mu: 0.0, sigma: 1.0 }
    }

    pub fn default_left_skewed() -> ScoreDistribution {
        ScoreDistribution::LeftSkewed { location: 0.0, scale: 1.0, shape: -4.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScoreDistribution::Normal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            ScoreDistribution::LeftSkewed { location, scale, shape } => {
                location.is_finite() && scale.is_finite() && scale > 0.0 && shape.is_finite() && shape < 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid score distribution {self:?}")))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ScoreDistribution::Normal { mu, sigma } => norm_cdf((x - mu) / sigma),
            ScoreDistribution::LeftSkewed { location, scale, shape } => {
                let z = (x - location) / scale;
                (norm_cdf(z) - 2.0 * owens_t(z, shape)).clamp(0.0, 1.0)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            ScoreDistribution::Normal { mu, sigma } => norm_pdf((x - mu) / sigma) / sigma,
            ScoreDistribution::LeftSkewed { location, scale, shape } => {
                let z = (x - location) / scale;
                2.0 / scale * norm_pdf(z) * norm_cdf(shape * z)
            }
        }
    }

    /// Quantile function for `p` in (0, 1).
    pub fn inverse_cdf(&self, p: f64) -> f64 {
        match *self {
            ScoreDistribution::Normal { mu, sigma } => mu + sigma * norm_quantile(p),
            ScoreDistribution::LeftSkewed { location, scale, .. } => {
                // Bracket, then Newton steps that fall back to bisection
                // whenever they leave the bracket.
                let (mut lo, mut hi) = (location - scale, location + scale);
                while self.cdf(lo) > p {
                    lo -= 2.0 * (hi - lo);
                }
                while self.cdf(hi) < p {
                    hi += 2.0 * (hi - lo);
                }
                let mut x = 0.5 * (lo + hi);
                for _ in 0..200 {
                    let f = self.cdf(x) - p;
                    if f == 0.0 {
                        return x;
                    }
                    if f < 0.0 {
                        lo = x;
                    } else {
                        hi = x;
                    }
                    let d = self.pdf(x);
                    let newton = x - f / d;
                    let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                    if (next - x).abs() <= 1e-15 * x.abs().max(scale) || hi - lo <= 1e-15 * scale {
                        return next;
                    }
                    x = next;
                }
                x
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.inverse_cdf(0.5)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScoreDistribution::Normal { mu, sigma } => mu + sigma * rng.sample::<f64, _>(StandardNormal),
            ScoreDistribution::LeftSkewed { location, scale, shape } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                let u0: f64 = rng.sample(StandardNormal);
                let u1: f64 = rng.sample(StandardNormal);
                location + scale * (delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1)
            }
        }
    }
}

/// Owen's T function, `T(h, a) = 1/(2 pi) * int_0^a exp(-h^2 (1 + t^2) / 2) / (1 + t^2) dt`,
/// by composite Gauss-Legendre quadrature.
pub fn owens_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if a < 0.0 {
        return -owens_t(h, -a);
    }
    let f = |t: f64| {
        let u = 1.0 + t * t;
        (-0.5 * h * h * u).exp() / u
    };
    let panels = (4.0 * a).ceil() as usize + 4;
    let width = a / panels as f64;
    let (nodes, weights) = gauss_legendre();
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        total += nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
    }
    total / (2.0 * std::f64::consts::PI)
}

const GL_ORDER: usize = 20;

/// Nodes and weights of the 20-point Gauss-Legendre rule on [-1, 1].
fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

/// Competition ranks of `values` where `lower_is_better` decides direction;
/// tied values share the minimum rank of their group.
fn competition_ranks(values: &[f64], lower_is_better: bool) -> Vec<u32> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].partial_cmp(&values[b]).expect("NaN filtered");
        if lower_is_better {
            o
        } else {
            o.reverse()
        }
    });
    let mut ranks = vec![0u32; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && values[order[pos - 1]] == values[i] {
            ranks[order[pos - 1]]
        } else {
            pos as u32 + 1
        };
    }
    ranks
}

/// Maps ranks (1 = best) to scores. The ranks are first re-ranked within the
/// slice, so any subset of a larger ranking is valid input.
pub fn ranks_to_scores(ranks: &[f64], dist: &ScoreDistribution) -> Result<Vec<f64>> {
    dist.validate()?;
    if ranks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(r) = ranks.iter().find(|r| !(r.is_finite() && **r >= 1.0)) {
        return Err(Error::InvalidArgument(format!("rank {r} must be >= 1")));
    }
    let n = ranks.len() as f64;
    Ok(competition_ranks(ranks, true)
        .into_iter()
        .map(|r| dist.inverse_cdf((n - r as f64 + 0.5) / n))
        .collect())
}

/// Highest score gets rank 1; ties share the minimum rank of their group.
pub fn scores_to_ranks(scores: &[f64]) -> Result<Vec<u32>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NaN("scores"));
    }
    Ok(competition_ranks(scores, false))
}

fn require_labels(ds: &TaskDataset) -> Result<Vec<f64>> {
    ds.labels().ok_or_else(|| Error::Schema("every record needs a label for training".into()))
}

/// Regression targets for a labelled dataset: transformed ranks, or the
/// scores as given.
pub fn dataset_scores(ds: &TaskDataset, dist: &ScoreDistribution) -> Result<Vec<f64>> {
    let labels = require_labels(ds)?;
    match ds.label_kind {
        LabelKind::Rank => ranks_to_scores(&labels, dist),
        LabelKind::Score => Ok(labels),
    }
}

/// Labels oriented so that larger means better (ranks are negated).
pub fn oriented_labels(ds: &TaskDataset) -> Result<Vec<f64>> {
    let labels = require_labels(ds)?;
    Ok(match ds.label_kind {
        LabelKind::Rank => labels.into_iter().map(|r| -r).collect(),
        LabelKind::Score => labels,
    })
}

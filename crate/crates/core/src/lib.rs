//! Performance prediction for neural architectures from small labelled
//! samples.
//!
//! The pipeline: ordinal architecture codes are k-hot encoded, rank labels
//! are mapped to scores through a chosen distribution, several base learners
//! (GP-NAS on one-hot and two-hot inputs, KNN, SVR) are fitted, and their
//! averaged prediction becomes the prior mean of a final Gaussian process
//! whose kernel is a weighted sum of a square-root RBF kernel and a
//! per-feature weighted variant. The feature weights are tuned by Bayesian
//! optimization of Kendall's tau on held-out data.

pub mod ablation;
pub mod config;
pub mod data;
pub mod encoding;
pub mod ensemble;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod labels;
pub mod learners;
pub mod metrics;
pub mod synth;
pub mod tuner;

pub use error::{Error, ErrorKind, Result};

//! Non-GP base learners used as ensemble members.

mod knn;
mod svr;

pub use knn::{knn_fit, knn_predict, KnnModel, Metric};
pub use svr::{svr_dual_objective, svr_fit, svr_predict, SvrModel, SvrParams};

//! Baseline policies sharing the least-squares estimator.

pub mod bayes_ids;
pub mod linucb;
pub mod thompson;

pub use bayes_ids::{estimate_variance_info, BayesIds, VarianceInfo, DEFAULT_MC_SAMPLES};
pub use linucb::LinUcb;
pub use thompson::{PosteriorSampler, Thompson};

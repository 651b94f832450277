//! Simulation library for finite-action stochastic linear bandits.
//!
//! Contains frequentist information-directed sampling with an explicit
//! explore/exploit split, LinUCB, Thompson sampling and a sample-based
//! Bayesian IDS, solvers for the asymptotic lower-bound constant, and an
//! experiment harness with a CSV trace format.

pub mod baselines;
pub mod environment;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod ids;
pub mod lowerbound;
pub mod policy;
pub mod rng;

pub use environment::{ActionSet, GapProfile, Instance};
pub use error::{Error, Result};
pub use estimator::{BetaSpec, EstimatorState};
pub use policy::{Decision, Policy};
pub use rng::{RngStream, StreamPurpose};

use crate::environment::{ActionSet, Instance};
use crate::error::Result;
use crate::estimator::EstimatorState;
use crate::rng::RngStream;

/// What a policy decided in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub arm: usize,
    /// Exploitation round: the observation will be discarded.
    pub exploit: bool,
    /// The policy's own information gain of the chosen arm (zero when the
    /// policy has no notion of information gain).
    pub info_gain: f64,
    /// Confidence coefficient the round was computed with, if any.
    pub confidence_beta: Option<f64>,
}

/// A bandit policy over a fixed action set.
///
/// The simulator calls [`Policy::select`] then [`Policy::observe`] once per
/// round. Policies never see the true parameter.
pub trait Policy: Send {
    fn label(&self) -> &str;

    fn select(&mut self, actions: &ActionSet, rng: &mut RngStream) -> Result<Decision>;

    fn observe(&mut self, actions: &ActionSet, arm: usize, reward: f64) -> Result<()>;

    fn estimator(&self) -> &EstimatorState;

    /// Harness-side checks against the true instance, run after `select`
    /// when assertions are enabled.
    fn audit(&self, _instance: &Instance) -> Result<()> {
        Ok(())
    }
}

/// Whitening scale for a nominal noise level; noiseless instances fall back
/// to unit scale.
pub fn whitening_scale(noise_std: f64) -> f64 {
    if noise_std > 0.0 {
        noise_std
    } else {
        1.0
    }
}

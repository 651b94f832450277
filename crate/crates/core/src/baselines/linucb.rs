use crate::environment::ActionSet;
use crate::error::Result;
use crate::estimator::{BetaSpec, EstimatorState};
use crate::ids::ucb_action;
use crate::policy::{whitening_scale, Decision, Policy};
use crate::rng::RngStream;

/// Optimistic index policy with confidence level `1/t^2`.
#[derive(Debug, Clone)]
pub struct LinUcb {
    estimator: EstimatorState,
    global_t: u64,
    beta: BetaSpec,
    label: String,
}

impl LinUcb {
    pub fn new(dim: usize, noise_std: f64, beta: BetaSpec) -> Result<Self> {
        beta.validate()?;
        Ok(Self {
            estimator: EstimatorState::with_noise_scale(dim, whitening_scale(noise_std))?,
            global_t: 1,
            beta,
            label: "LinUCB".to_string(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn global_t(&self) -> u64 {
        self.global_t
    }

    /// Confidence coefficient used at the current round.
    pub fn confidence(&self) -> Result<f64> {
        let t = self.global_t as f64;
        self.estimator
            .beta(&self.beta, t * t, 1.0, Some(self.global_t))
    }
}

impl Policy for LinUcb {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&mut self, actions: &ActionSet, _rng: &mut RngStream) -> Result<Decision> {
        let beta = self.confidence()?;
        Ok(Decision {
            arm: ucb_action(&self.estimator, actions, beta),
            exploit: false,
            info_gain: 0.0,
            confidence_beta: Some(beta),
        })
    }

    fn observe(&mut self, actions: &ActionSet, arm: usize, reward: f64) -> Result<()> {
        self.global_t += 1;
        self.estimator.update(actions.get(arm), reward)
    }

    fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }
}

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::environment::ActionSet;
use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::policy::{whitening_scale, Decision, Policy};
use crate::rng::RngStream;

/// Draws from the Gaussian posterior `N(theta_hat, V^-1)`.
#[derive(Debug, Clone)]
pub struct PosteriorSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl PosteriorSampler {
    pub fn new(est: &EstimatorState) -> Result<Self> {
        let chol = Cholesky::new(est.precision_inv().clone())
            .ok_or_else(|| Error::Numerical("posterior covariance is not positive definite".into()))?;
        Ok(Self {
            mean: est.theta_hat().clone(),
            factor: chol.l(),
        })
    }

    pub fn draw(&self, rng: &mut RngStream) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.standard_normal());
        &self.mean + &self.factor * z
    }
}

/// Gaussian Thompson sampling on the whitened least-squares posterior.
#[derive(Debug, Clone)]
pub struct Thompson {
    estimator: EstimatorState,
    label: String,
}

impl Thompson {
    pub fn new(dim: usize, noise_std: f64) -> Result<Self> {
        Ok(Self {
            estimator: EstimatorState::with_noise_scale(dim, whitening_scale(noise_std))?,
            label: "TS".to_string(),
        })
    }

    pub fn from_estimator(estimator: EstimatorState) -> Self {
        Self {
            estimator,
            label: "TS".to_string(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Policy for Thompson {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&mut self, actions: &ActionSet, rng: &mut RngStream) -> Result<Decision> {
        let theta = PosteriorSampler::new(&self.estimator)?.draw(rng);
        Ok(Decision {
            arm: actions.argmax(&theta),
            exploit: false,
            info_gain: 0.0,
            confidence_beta: None,
        })
    }

    fn observe(&mut self, actions: &ActionSet, arm: usize, reward: f64) -> Result<()> {
        self.estimator.update(actions.get(arm), reward)
    }

    fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::make_orthonormal_instance;

    #[test]
    fn fresh_posterior_is_symmetric() {
        let inst = make_orthonormal_instance(0.5, 1.0).unwrap();
        let mut ts = Thompson::new(2, 1.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let n = 10_000;
        let first = (0..n)
            .filter(|_| ts.select(inst.actions(), &mut rng).unwrap().arm == 0)
            .count();
        assert!((first as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn collapsed_posterior_is_greedy() {
        let inst = make_orthonormal_instance(0.1, 1.0).unwrap();
        let mut est = EstimatorState::new(2).unwrap();
        let big = 1.0e5;
        for a in 0..2 {
            let x = inst.actions().get(a) * big;
            est.update(&x, inst.mean_reward(a) * big).unwrap();
        }
        assert!(est.precision()[(0, 0)] > 1e9);
        let greedy = inst.actions().argmax(est.theta_hat());
        let mut ts = Thompson::from_estimator(est);
        let mut rng = RngStream::new(6, 0);
        for _ in 0..1000 {
            assert_eq!(ts.select(inst.actions(), &mut rng).unwrap().arm, greedy);
        }
    }

    #[test]
    fn replay_is_identical() {
        let inst = make_orthonormal_instance(0.2, 1.0).unwrap();
        let run = || {
            let mut ts = Thompson::new(2, 1.0).unwrap();
            let mut rng = RngStream::new(8, 1);
            (0..300)
                .map(|_| {
                    let arm = ts.select(inst.actions(), &mut rng).unwrap().arm;
                    let y = inst.sample_reward(arm, &mut rng).unwrap();
                    ts.observe(inst.actions(), arm, y).unwrap();
                    arm
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}

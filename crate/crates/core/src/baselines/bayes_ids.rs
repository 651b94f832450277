//! IDS with Monte-Carlo Bayesian gaps and the variance-based information gain.

use nalgebra::DVector;

use super::thompson::PosteriorSampler;
use crate::environment::{argmax_by, ActionSet};
use crate::error::{invalid, Error, Result};
use crate::estimator::EstimatorState;
use crate::ids::{ids_distribution, SamplingDistribution};
use crate::policy::{whitening_scale, Decision, Policy};
use crate::rng::RngStream;

pub const DEFAULT_MC_SAMPLES: usize = 10_000;
pub const MIN_MC_SAMPLES: usize = 100;

/// Monte-Carlo summary of a posterior sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceInfo {
    /// Fraction of samples in which each action is optimal.
    pub cell_mass: Vec<f64>,
    /// `sum_z q(z) <nu(z) - theta_bar, x>^2`.
    pub info: Vec<f64>,
    /// Mean of `max_z <z, theta> - <x, theta>`.
    pub gaps: Vec<f64>,
}

impl VarianceInfo {
    /// Cell of every sample is the action that maximizes its mean reward.
    pub fn from_samples(samples: &[DVector<f64>], actions: &ActionSet) -> Result<Self> {
        let cells: Vec<usize> = samples.iter().map(|th| actions.argmax(th)).collect();
        Self::from_assignments(samples, &cells, actions)
    }

    /// Same summary with externally supplied cell assignments.
    pub fn from_assignments(
        samples: &[DVector<f64>],
        cells: &[usize],
        actions: &ActionSet,
    ) -> Result<Self> {
        if samples.is_empty() || samples.len() != cells.len() {
            return invalid("need one cell per sample and at least one sample");
        }
        let k = actions.len();
        let d = actions.dim();
        if cells.iter().any(|&c| c >= k) || samples.iter().any(|s| s.len() != d) {
            return invalid("sample dimension or cell index out of range");
        }
        let m = samples.len() as f64;
        let mut counts = vec![0usize; k];
        let mut sums = vec![DVector::zeros(d); k];
        let mut total = DVector::zeros(d);
        let mut gaps = vec![0.0; k];
        for (th, &c) in samples.iter().zip(cells) {
            counts[c] += 1;
            sums[c] += th;
            total += th;
            let means: Vec<f64> = actions.iter().map(|x| x.dot(th)).collect();
            let top = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            gaps.iter_mut().zip(&means).for_each(|(g, v)| *g += top - v);
        }
        gaps.iter_mut().for_each(|g| *g /= m);
        let mean = total / m;
        let cell_mass: Vec<f64> = counts.iter().map(|&c| c as f64 / m).collect();
        let info = actions
            .iter()
            .map(|x| {
                (0..k)
                    .filter(|&z| counts[z] > 0)
                    .map(|z| {
                        let shift = (&sums[z] / counts[z] as f64 - &mean).dot(x);
                        cell_mass[z] * shift * shift
                    })
                    .sum()
            })
            .collect();
        Ok(Self {
            cell_mass,
            info,
            gaps,
        })
    }
}

/// Draws `m` posterior samples and summarizes them.
pub fn estimate_variance_info(
    est: &EstimatorState,
    actions: &ActionSet,
    m: usize,
    rng: &mut RngStream,
) -> Result<VarianceInfo> {
    let sampler = PosteriorSampler::new(est)?;
    let samples: Vec<DVector<f64>> = (0..m).map(|_| sampler.draw(rng)).collect();
    VarianceInfo::from_samples(&samples, actions)
}

#[derive(Debug, Clone)]
pub struct BayesIds {
    estimator: EstimatorState,
    mc_samples: usize,
    fast_pairing: bool,
    label: String,
}

impl BayesIds {
    pub fn new(dim: usize, noise_std: f64, mc_samples: usize, fast_pairing: bool) -> Result<Self> {
        if mc_samples < MIN_MC_SAMPLES {
            return invalid(format!(
                "Bayesian IDS needs at least {MIN_MC_SAMPLES} samples, got {mc_samples}"
            ));
        }
        Ok(Self {
            estimator: EstimatorState::with_noise_scale(dim, whitening_scale(noise_std))?,
            mc_samples,
            fast_pairing,
            label: "BayesIDS".to_string(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Sampling distribution for the current posterior.
    pub fn distribution(
        &self,
        actions: &ActionSet,
        rng: &mut RngStream,
    ) -> Result<(SamplingDistribution, VarianceInfo)> {
        let vi = estimate_variance_info(&self.estimator, actions, self.mc_samples, rng)?;
        let leader = argmax_by(vi.gaps.iter().map(|g| -g));
        let mu = match ids_distribution(&vi.gaps, &vi.info, leader, self.fast_pairing) {
            Ok((mu, _)) => mu,
            Err(Error::DegenerateInformation) => SamplingDistribution::point(leader),
            Err(e) => return Err(e),
        };
        Ok((mu, vi))
    }
}

impl Policy for BayesIds {
    fn label(&self) -> &str {
        &self.label
    }

    fn select(&mut self, actions: &ActionSet, rng: &mut RngStream) -> Result<Decision> {
        let (mu, vi) = self.distribution(actions, rng)?;
        let arm = mu.sample(rng);
        Ok(Decision {
            arm,
            exploit: false,
            info_gain: vi.info[arm],
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

//! Bandit environments: action sets, ground-truth instances and reward noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Tolerance used to reject ties for the optimal action.
pub const TIE_TOLERANCE: f64 = 1e-12;

const MAX_RESAMPLES: usize = 10_000;

/// The finite set of feature vectors the learner chooses from.
///
/// Policies only ever see an `ActionSet`; the true parameter lives in
/// [`Instance`] and stays with the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    dim: usize,
    actions: Vec<DVector<f64>>,
}

impl ActionSet {
    pub fn new(actions: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = actions.first() else {
            return invalid("action set is empty");
        };
        let dim = first.len();
        if dim == 0 {
            return invalid("actions must have dimension >= 1");
        }
        if let Some(bad) = actions.iter().position(|a| a.len() != dim) {
            return invalid(format!("action {bad} has dimension {} != {dim}", actions[bad].len()));
        }
        if actions.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return invalid("action features must be finite");
        }
        Ok(Self { dim, actions })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> &DVector<f64> {
        &self.actions[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DVector<f64>> {
        self.actions.iter()
    }

    /// Rank of the stacked `k x d` feature matrix.
    pub fn rank(&self) -> usize {
        let m = DMatrix::from_fn(self.len(), self.dim, |i, j| self.actions[i][j]);
        let scale = m.amax().max(1.0);
        m.svd(false, false).rank(1e-10 * scale)
    }

    /// Largest pairwise Euclidean distance.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.actions.iter().enumerate() {
            for b in &self.actions[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }

    /// `argmax_x <x, theta>` with lowest-index tie-breaking.
    pub fn argmax(&self, theta: &DVector<f64>) -> usize {
        argmax_by(self.actions.iter().map(|x| x.dot(theta)))
    }
}

/// Index of the largest value, first one on ties.
pub fn argmax_by(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Serialized form of an instance, used for `file` instance specs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub actions: Vec<Vec<f64>>,
    pub theta_star: Vec<f64>,
    pub noise_std: f64,
    #[serde(default)]
    pub label: Option<String>,
}

/// A ground-truth linear bandit environment.
#[derive(Debug, Clone)]
pub struct Instance {
    actions: ActionSet,
    theta_star: DVector<f64>,
    noise_std: f64,
    label: String,
    diameter_warning: bool,
}

impl Instance {
    /// Validates spanning, dimension agreement and uniqueness of the optimum.
    pub fn new(
        actions: ActionSet,
        theta_star: DVector<f64>,
        noise_std: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if actions.len() < 2 {
            return invalid(format!("need at least 2 actions, got {}", actions.len()));
        }
        if theta_star.len() != actions.dim() {
            return invalid(format!(
                "theta_star has dimension {} but actions have {}",
                theta_star.len(),
                actions.dim()
            ));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return invalid(format!("noise_std must be finite and >= 0, got {noise_std}"));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return invalid("theta_star must be finite");
        }
        if actions.rank() != actions.dim() {
            return invalid("actions do not span the feature space");
        }
        if best_action_tie(&actions, &theta_star) {
            return invalid("optimal action is not unique");
        }
        let diameter_warning = actions.diameter() > 1.0 + 1e-12;
        Ok(Self {
            actions,
            theta_star,
            noise_std,
            label: label.into(),
            diameter_warning,
        })
    }

    pub fn from_file_repr(repr: &InstanceFile) -> Result<Self> {
        let actions = ActionSet::from_rows(&repr.actions)?;
        let label = repr.label.clone().unwrap_or_else(|| "file".to_string());
        Self::new(
            actions,
            DVector::from_column_slice(&repr.theta_star),
            repr.noise_std,
            label,
        )
    }

    pub fn to_file_repr(&self) -> InstanceFile {
        InstanceFile {
            actions: self.actions.iter().map(|a| a.iter().copied().collect()).collect(),
            theta_star: self.theta_star.iter().copied().collect(),
            noise_std: self.noise_std,
            label: Some(self.label.clone()),
        }
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.actions.dim()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Set when the action set has diameter above one. Such instances are
    /// accepted (the end-of-optimism example is one of them).
    pub fn diameter_warning(&self) -> bool {
        self.diameter_warning
    }

    pub fn mean_reward(&self, arm: usize) -> f64 {
        self.actions.get(arm).dot(&self.theta_star)
    }

    /// Reward `<x_arm, theta*> + sigma * z` with `z ~ N(0, 1)` drawn from `rng`.
    pub fn sample_reward(&self, arm: usize, rng: &mut RngStream) -> Result<f64> {
        if arm >= self.num_actions() {
            return invalid(format!("arm {arm} out of range 0..{}", self.num_actions()));
        }
        let mean = self.mean_reward(arm);
        if self.noise_std == 0.0 {
            return Ok(mean);
        }
        Ok(mean + self.noise_std * rng.standard_normal())
    }

    pub fn gap_profile(&self) -> GapProfile {
        let means: Vec<f64> = (0..self.num_actions()).map(|i| self.mean_reward(i)).collect();
        let best_index = argmax_by(means.iter().copied());
        let best = means[best_index];
        let gaps: Vec<f64> = means
            .iter()
            .enumerate()
            .map(|(i, m)| if i == best_index { 0.0 } else { (best - m).max(0.0) })
            .collect();
        let delta_min = gaps
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best_index)
            .map(|(_, g)| *g)
            .fold(f64::INFINITY, f64::min);
        GapProfile {
            gaps,
            best_index,
            delta_min,
        }
    }
}

fn best_action_tie(actions: &ActionSet, theta: &DVector<f64>) -> bool {
    let values: Vec<f64> = actions.iter().map(|x| x.dot(theta)).collect();
    let best = argmax_by(values.iter().copied());
    values
        .iter()
        .enumerate()
        .any(|(i, v)| i != best && (values[best] - v) <= TIE_TOLERANCE)
}

/// True sub-optimality gaps of an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GapProfile {
    pub gaps: Vec<f64>,
    pub best_index: usize,
    /// Smallest non-zero gap.
    pub delta_min: f64,
}

impl GapProfile {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }
}

fn unit_sphere(d: usize, rng: &mut RngStream) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.standard_normal());
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// `k` actions and the parameter drawn uniformly on the unit sphere of `R^d`.
///
/// Rank-deficient or tied draws are discarded and the whole instance is
/// resampled from the same stream.
pub fn make_random_instance(
    d: usize,
    k: usize,
    noise_std: f64,
    rng: &mut RngStream,
) -> Result<Instance> {
    if d == 0 {
        return invalid("dimension must be >= 1");
    }
    if k < 2 {
        return invalid("need at least 2 actions");
    }
    if k < d {
        return invalid(format!("{k} actions cannot span R^{d}"));
    }
    for _ in 0..MAX_RESAMPLES {
        let actions: Vec<DVector<f64>> = (0..k).map(|_| unit_sphere(d, rng)).collect();
        let theta = unit_sphere(d, rng);
        let actions = ActionSet::new(actions)?;
        match Instance::new(actions, theta, noise_std, format!("random-d{d}-k{k}")) {
            Ok(inst) => return Ok(inst),
            Err(Error::InvalidArgument(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerical(format!(
        "could not draw a valid random instance in {MAX_RESAMPLES} attempts"
    )))
}

/// Arms `(1,0)`, `(1-eps, 2 eps)`, `(0,1)` with `theta* = (1,0)`.
pub fn make_eoo_instance(epsilon: f64, noise_std: f64) -> Result<Instance> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid(format!("epsilon must be > 0, got {epsilon}"));
    }
    let actions = ActionSet::from_rows(&[
        vec![1.0, 0.0],
        vec![1.0 - epsilon, 2.0 * epsilon],
        vec![0.0, 1.0],
    ])?;
    Instance::new(
        actions,
        DVector::from_vec(vec![1.0, 0.0]),
        noise_std,
        format!("eoo-eps{epsilon}"),
    )
}

/// Two orthonormal arms `e1, e2` with `theta* = (1, 1 - gap)`.
pub fn make_orthonormal_instance(gap: f64, noise_std: f64) -> Result<Instance> {
    if !(gap > 0.0) {
        return invalid("gap must be positive");
    }
    let actions = ActionSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])?;
    Instance::new(
        actions,
        DVector::from_vec(vec![1.0, 1.0 - gap]),
        noise_std,
        format!("ortho-gap{gap}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instance_is_unit_norm_and_spanning() {
        let mut rng = RngStream::new(7, 0);
        let inst = make_random_instance(2, 6, 0.1f64.sqrt(), &mut rng).unwrap();
        assert_eq!(inst.num_actions(), 6);
        assert_eq!(inst.actions().rank(), 2);
        for x in inst.actions().iter() {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
        assert!((inst.theta_star().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_instance_is_deterministic() {
        let a = make_random_instance(2, 6, 0.3, &mut RngStream::new(7, 0)).unwrap();
        let b = make_random_instance(2, 6, 0.3, &mut RngStream::new(7, 0)).unwrap();
        assert_eq!(a.actions(), b.actions());
        assert_eq!(a.theta_star(), b.theta_star());
    }

    #[test]
    fn one_dimensional_random_instance() {
        for seed in 0..20 {
            let inst = make_random_instance(1, 2, 0.0, &mut RngStream::new(seed, 0)).unwrap();
            for x in inst.actions().iter() {
                assert_eq!(x[0].abs(), 1.0);
            }
            // unique optimum forces opposite signs
            assert_eq!(inst.actions().get(0)[0], -inst.actions().get(1)[0]);
        }
    }

    #[test]
    fn random_instance_rejects_bad_sizes() {
        let mut rng = RngStream::new(0, 0);
        assert!(make_random_instance(0, 3, 1.0, &mut rng).is_err());
        assert!(make_random_instance(2, 1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn eoo_layout_and_gaps() {
        let inst = make_eoo_instance(0.01, 0.1f64.sqrt()).unwrap();
        assert_eq!(inst.actions().get(1).as_slice(), &[0.99, 0.02]);
        assert_eq!(inst.theta_star().as_slice(), &[1.0, 0.0]);
        let gp = inst.gap_profile();
        assert_eq!(gp.best_index, 0);
        assert_eq!(gp.gaps[0], 0.0);
        assert!((gp.gaps[1] - 0.01).abs() < 1e-15);
        assert_eq!(gp.gaps[2], 1.0);
        assert!((gp.delta_min - 0.01).abs() < 1e-15);
        assert!(inst.diameter_warning());
    }

    #[test]
    fn eoo_rejects_nonpositive_epsilon() {
        assert!(make_eoo_instance(0.0, 1.0).is_err());
        assert!(make_eoo_instance(-0.1, 1.0).is_err());
    }

    #[test]
    fn gap_profile_orthonormal() {
        let actions = ActionSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let inst = Instance::new(actions, DVector::from_vec(vec![1.0, 0.5]), 1.0, "o").unwrap();
        let gp = inst.gap_profile();
        assert_eq!(gp.gaps, vec![0.0, 0.5]);
        assert_eq!(gp.gaps[gp.best_index], 0.0);
    }

    #[test]
    fn constructor_rejects_rank_deficiency_and_ties() {
        let actions = ActionSet::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(Instance::new(actions, DVector::from_vec(vec![1.0, 0.0]), 1.0, "x").is_err());
        let actions = ActionSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(Instance::new(actions, DVector::from_vec(vec![1.0, 1.0]), 1.0, "x").is_err());
        let actions = ActionSet::from_rows(&[vec![1.0, 0.0], vec![0.0]]);
        assert!(actions.is_err());
    }

    #[test]
    fn noiseless_reward_is_mean() {
        let inst = make_eoo_instance(0.01, 0.0).unwrap();
        let mut rng = RngStream::new(1, 1);
        assert_eq!(inst.sample_reward(2, &mut rng).unwrap(), 0.0);
        for arm in 0..3 {
            assert_eq!(inst.sample_reward(arm, &mut rng).unwrap(), inst.mean_reward(arm));
        }
        assert!(inst.sample_reward(3, &mut rng).is_err());
    }

    #[test]
    fn reward_sample_mean_concentrates() {
        let inst = make_eoo_instance(0.01, 1.0).unwrap();
        let mut rng = RngStream::new(3, 9);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| inst.sample_reward(1, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.99).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn reward_replay_is_bitwise_identical() {
        let inst = make_eoo_instance(0.01, 0.5).unwrap();
        let draw = |seed| {
            let mut rng = RngStream::new(seed, 4);
            (0..50)
                .map(|i| inst.sample_reward(i % 3, &mut rng).unwrap().to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }
}

//! Exponential-weights primal-dual game for the covering program.

use nalgebra::{DMatrix, DVector};

use super::{cost_of, finish, inverse_of, AllocationSolution, SolverMethod, OPTIMAL_ARM_MASS};
use crate::environment::Instance;
use crate::error::{invalid, Error, Result};
use crate::ids::SamplingDistribution;

/// State of the dual player and the accumulated allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    /// Distribution over constraints, one per suboptimal action.
    pub q_dual: Vec<f64>,
    /// Allocation over actions (optimal action excluded from the count).
    pub cum_alloc: Vec<f64>,
    pub cum_loss: Vec<f64>,
    pub beta_n: f64,
}

/// One iteration of the game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameStep {
    pub q_dual: Vec<f64>,
    pub arm: usize,
    pub min_constraint: f64,
    /// Running sum of `I_t(x_t)`.
    pub cum_info: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GameTrace {
    pub steps: Vec<GameStep>,
}

impl GameTrace {
    pub fn total_info(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_info)
    }
}

/// `V = I + M x* x*^T + sum alpha x x^T`.
fn game_precision(instance: &Instance, alloc: &[f64], best: usize) -> DMatrix<f64> {
    let d = instance.dim();
    let mut v = DMatrix::identity(d, d);
    v.ger(OPTIMAL_ARM_MASS, instance.actions().get(best), instance.actions().get(best), 1.0);
    for (x, &a) in instance.actions().iter().zip(alloc) {
        if a > 0.0 {
            v.ger(a, x, x, 1.0);
        }
    }
    v
}

/// Runs the game until every constraint reaches `beta_n` or `rounds` is
/// exhausted. Returns the allocation divided by `beta_n` and the trace.
pub fn oracle_primal_dual(
    instance: &Instance,
    beta_n: f64,
    rounds: usize,
) -> Result<(AllocationSolution, GameTrace)> {
    if !(beta_n > 0.0 && beta_n.is_finite()) {
        return invalid(format!("beta_n must be positive, got {beta_n}"));
    }
    let profile = instance.gap_profile();
    let best = profile.best_index;
    let k = instance.num_actions();
    let subs: Vec<usize> = (0..k).filter(|&x| x != best).collect();
    let l = subs.len();
    let x_star = instance.actions().get(best);
    let theta = instance.theta_star();

    let mut state = GameState {
        q_dual: vec![1.0 / l as f64; l],
        cum_alloc: vec![0.0; k],
        cum_loss: vec![0.0; l],
        beta_n,
    };
    let mut trace = GameTrace::default();
    let mut max_loss = vec![0.0_f64; l];
    let mut cum_info = 0.0;

    for t in 1..=rounds {
        let inv = inverse_of(game_precision(instance, &state.cum_alloc, best))?;
        // h[j][x] = 1/2 <nu_j - theta*, x>^2 with nu_j the projection onto
        // the halfspace where subs[j] beats x*.
        let h: Vec<Vec<f64>> = subs
            .iter()
            .map(|&z| {
                let b: DVector<f64> = x_star - instance.actions().get(z);
                let vb = &inv * &b;
                let shift = vb * (-theta.dot(&b) / b.dot(&(&inv * &b)));
                instance
                    .actions()
                    .iter()
                    .map(|x| 0.5 * shift.dot(x).powi(2))
                    .collect()
            })
            .collect();
        let level: Vec<f64> = h
            .iter()
            .map(|hj| {
                hj.iter().zip(&state.cum_alloc).map(|(a, b)| a * b).sum::<f64>()
                    + OPTIMAL_ARM_MASS * hj[best]
            })
            .collect();
        let min_level = level.iter().copied().fold(f64::INFINITY, f64::min);
        if min_level >= beta_n {
            break;
        }

        let info: Vec<f64> = (0..k)
            .map(|x| state.q_dual.iter().zip(&h).map(|(q, hj)| q * hj[x]).sum())
            .collect();
        let arm = subs
            .iter()
            .copied()
            .filter(|&x| info[x] > 0.0)
            .min_by(|&a, &b| (profile.gaps[a] / info[a]).total_cmp(&(profile.gaps[b] / info[b])))
            .ok_or(Error::DegenerateInformation)?;
        state.cum_alloc[arm] += 1.0;
        cum_info += info[arm];

        // The dual player only weighs constraints still below the target.
        for (j, hj) in h.iter().enumerate() {
            state.cum_loss[j] += hj[arm];
            max_loss[j] = max_loss[j].max(hj[arm]);
        }
        let active: Vec<bool> = level
            .iter()
            .zip(&h)
            .map(|(lv, hj)| lv + hj[arm] < beta_n)
            .collect();
        let scale = (0..l)
            .filter(|&j| active[j])
            .map(|j| max_loss[j])
            .fold(0.0_f64, f64::max);
        let eta = ((l.max(2) as f64).ln() / t as f64).sqrt() / scale.max(f64::MIN_POSITIVE);
        let low = (0..l)
            .filter(|&j| active[j])
            .map(|j| state.cum_loss[j])
            .fold(f64::INFINITY, f64::min);
        let mut weights: Vec<f64> = (0..l)
            .map(|j| if active[j] { (-eta * (state.cum_loss[j] - low)).exp() } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights = vec![1.0 / l as f64; l];
        }
        trace.steps.push(GameStep {
            q_dual: state.q_dual.clone(),
            arm,
            min_constraint: min_level,
            cum_info,
        });
        state.q_dual = weights;

        if t == rounds {
            return Err(Error::Convergence {
                iterations: rounds,
                residual: beta_n - min_level,
            });
        }
    }

    let sub: Vec<f64> = state.cum_alloc.iter().map(|a| a / beta_n).collect();
    let mut sol = finish(instance, sub, SolverMethod::Game, trace.steps.len())?;
    sol.cost = cost_of(instance, &state.cum_alloc) / beta_n;
    Ok((sol, trace))
}

/// Oracle IDS: mix the optimal action with `z = argmin Delta(z) / I(z)` at
/// probability `delta / Delta(z)`.
pub fn oracle_ids_response(
    gaps: &[f64],
    delta: f64,
    info: &[f64],
    best: usize,
) -> Result<SamplingDistribution> {
    if gaps.len() != info.len() || best >= gaps.len() {
        return invalid("gaps and information must be aligned");
    }
    if !(delta > 0.0) {
        return invalid(format!("estimation error must be positive, got {delta}"));
    }
    let z = (0..gaps.len())
        .filter(|&x| x != best && info[x] > 0.0)
        .min_by(|&a, &b| (gaps[a] / info[a]).total_cmp(&(gaps[b] / info[b])))
        .ok_or(Error::DegenerateInformation)?;
    let p = (delta / gaps[z]).clamp(0.0, 1.0);
    Ok(SamplingDistribution::two_point(best, z, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{make_eoo_instance, make_orthonormal_instance};
    use crate::ids::ids_distribution;

    #[test]
    fn single_constraint_counts_pulls() {
        let inst = make_orthonormal_instance(0.5, 1.0).unwrap();
        let beta = 1e6_f64.ln();
        let (sol, trace) = oracle_primal_dual(&inst, beta, 10_000).unwrap();
        assert!(trace.steps.iter().all(|s| s.q_dual == vec![1.0]));
        let pulls = (8.0 * beta).ceil();
        assert!((sol.cost - 0.5 * pulls / beta).abs() < 1e-9);
        assert!((sol.cost - 4.0).abs() < 0.4);
        assert!(trace.total_info() <= beta + 3.0 * beta.sqrt());
    }

    #[test]
    fn doubling_beta_keeps_ratio() {
        let inst = make_eoo_instance(0.2, 1.0).unwrap();
        let (a, ta) = oracle_primal_dual(&inst, 20.0, 1_000_000).unwrap();
        let (b, _) = oracle_primal_dual(&inst, 40.0, 1_000_000).unwrap();
        assert!((a.cost - b.cost).abs() <= 0.1 * a.cost);
        for step in &ta.steps {
            let total: f64 = step.q_dual.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_ids_limits() {
        let gaps = [0.0, 0.5, 1.0];
        let info = [0.0, 0.1, 0.4];
        let mu = oracle_ids_response(&gaps, 1.0, &info, 0).unwrap();
        assert_eq!(mu.prob(2), 1.0);
        let mu = oracle_ids_response(&gaps, 1e-12, &info, 0).unwrap();
        assert!(mu.prob(0) > 1.0 - 1e-11);
        assert!(oracle_ids_response(&gaps, 0.1, &[0.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn oracle_ids_matches_general_solver() {
        let gaps = [0.3, 0.0, 0.8, 0.5];
        let info = [0.2, 0.0, 0.9, 0.1];
        for delta in [0.01, 0.1, 0.25] {
            let mu = oracle_ids_response(&gaps, delta, &info, 1).unwrap();
            let lifted: Vec<f64> = gaps.iter().map(|g| g + delta).collect();
            let (general, _) = ids_distribution(&lifted, &info, 1, false).unwrap();
            for x in 0..4 {
                assert!((mu.prob(x) - general.prob(x)).abs() < 1e-6);
            }
        }
    }
}

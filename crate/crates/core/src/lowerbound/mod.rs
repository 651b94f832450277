//! The asymptotic lower-bound constant and its optimal allocation.
//!
//! The optimal action carries a large finite mass [`OPTIMAL_ARM_MASS`] in
//! every evaluation; costs count suboptimal mass only.

mod game;

pub use game::{oracle_ids_response, oracle_primal_dual, GameState, GameTrace, GameStep};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::environment::Instance;
use crate::error::{invalid, Error, Result};

/// Surrogate for the unbounded allocation on the optimal action.
pub const OPTIMAL_ARM_MASS: f64 = 1e8;
const EVAL_RIDGE: f64 = 1e-12;
/// Scalings beyond this count as infeasible directions.
const MAX_SCALE: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Subgradient,
    Game,
    BruteForce,
}

impl SolverMethod {
    pub fn tag(self) -> &'static str {
        match self {
            SolverMethod::Subgradient => "subgradient",
            SolverMethod::Game => "game",
            SolverMethod::BruteForce => "brute",
        }
    }
}

/// Allocation normalized so the constraint level is one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationSolution {
    /// Per action; the optimal action holds [`OPTIMAL_ARM_MASS`].
    pub alpha: Vec<f64>,
    /// `sum_x alpha(x) Delta(x)`.
    pub cost: f64,
    pub min_constraint: f64,
    pub method: SolverMethod,
    pub iterations: usize,
}

fn precision_of(instance: &Instance, alpha: &[f64]) -> DMatrix<f64> {
    let d = instance.dim();
    let mut v = DMatrix::identity(d, d) * EVAL_RIDGE;
    for (x, &a) in instance.actions().iter().zip(alpha) {
        if a > 0.0 {
            v.ger(a, x, x, 1.0);
        }
    }
    v
}

/// Cholesky inverse; near-singular matrices go through an eigendecomposition
/// with eigenvalues floored at the evaluation ridge.
fn inverse_of(v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = Cholesky::new(v.clone()) {
        let inv = c.inverse();
        if inv.iter().all(|x| x.is_finite()) {
            return Ok(inv);
        }
    }
    let eig = SymmetricEigen::new(v);
    if eig.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("allocation precision is not finite".into()));
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l.max(EVAL_RIDGE));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose())
}

fn check_alpha(instance: &Instance, alpha: &[f64]) -> Result<()> {
    if alpha.len() != instance.num_actions() {
        return invalid(format!(
            "allocation has {} entries for {} actions",
            alpha.len(),
            instance.num_actions()
        ));
    }
    if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return invalid("allocation entries must be finite and nonnegative");
    }
    Ok(())
}

/// Per-alternative terms `Delta(z)^2 / (2 |x* - z|^2_{V(alpha)^-1})` and the
/// inverse they were computed with.
fn constraint_terms(instance: &Instance, alpha: &[f64]) -> Result<(Vec<(usize, f64)>, DMatrix<f64>)> {
    let inv = inverse_of(precision_of(instance, alpha))?;
    let profile = instance.gap_profile();
    let best = instance.actions().get(profile.best_index);
    let terms = (0..instance.num_actions())
        .filter(|&z| z != profile.best_index)
        .map(|z| {
            let b = best - instance.actions().get(z);
            let norm = (&inv * &b).dot(&b);
            (z, profile.gaps[z] * profile.gaps[z] / (2.0 * norm))
        })
        .collect();
    Ok((terms, inv))
}

/// `min_z Delta(z)^2 / (2 |x* - z|^2_{V(alpha)^-1})` with `V(alpha) = sum alpha x x^T`.
pub fn constraint_value(instance: &Instance, alpha: &[f64]) -> Result<f64> {
    check_alpha(instance, alpha)?;
    let (terms, _) = constraint_terms(instance, alpha)?;
    Ok(terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min))
}

/// Allocation with the surrogate mass placed on the optimal action.
pub fn with_optimal_mass(instance: &Instance, suboptimal: &[f64]) -> Vec<f64> {
    let best = instance.gap_profile().best_index;
    let mut alpha = suboptimal.to_vec();
    alpha[best] = OPTIMAL_ARM_MASS;
    alpha
}

fn cost_of(instance: &Instance, alpha: &[f64]) -> f64 {
    let gaps = instance.gap_profile().gaps;
    alpha.iter().zip(&gaps).map(|(a, g)| a * g).sum()
}

/// Smallest `c` with `constraint(c * alpha + surrogate) >= 1`, starting from
/// the homogeneous estimate `1 / constraint(alpha + surrogate)`.
fn feasible_scale(instance: &Instance, suboptimal: &[f64]) -> Result<f64> {
    let at = |c: f64| -> Result<f64> {
        let scaled: Vec<f64> = suboptimal.iter().map(|a| a * c).collect();
        constraint_value(instance, &with_optimal_mass(instance, &scaled))
    };
    let base = at(1.0)?;
    if !(base > 0.0) {
        return Ok(f64::INFINITY);
    }
    let mut c = 1.0 / base;
    for _ in 0..60 {
        if !(c < MAX_SCALE) {
            return Ok(f64::INFINITY);
        }
        let f = at(c)?;
        if f >= 1.0 - 1e-12 {
            return Ok(c);
        }
        c /= f.max(1e-300);
        c *= 1.0 + 1e-12;
    }
    Ok(c)
}

fn finish(
    instance: &Instance,
    suboptimal: Vec<f64>,
    method: SolverMethod,
    iterations: usize,
) -> Result<AllocationSolution> {
    let alpha = with_optimal_mass(instance, &suboptimal);
    Ok(AllocationSolution {
        cost: cost_of(instance, &suboptimal),
        min_constraint: constraint_value(instance, &alpha)?,
        alpha,
        method,
        iterations,
    })
}

/// Default budgets per method.
pub const SUBGRADIENT_ITERATIONS: usize = 100_000;
pub const GAME_BETA: f64 = 200.0;
pub const GAME_ROUNDS: usize = 5_000_000;

/// `c*` by exponentiated-gradient ascent or by the primal-dual game.
///
/// `budget` is an iteration count for the first and a round count for the
/// second.
pub fn solve_cstar(instance: &Instance, method: SolverMethod, budget: usize) -> Result<AllocationSolution> {
    match method {
        SolverMethod::Subgradient => solve_subgradient(instance, budget),
        SolverMethod::Game => {
            let (sol, _) = oracle_primal_dual(instance, GAME_BETA, budget)?;
            Ok(sol)
        }
        SolverMethod::BruteForce => invalid("use brute_force_cstar for the grid oracle"),
    }
}

/// Maximizes the concave `G(w) = constraint(w / Delta)` over the simplex on
/// suboptimal actions; then `c* = 1 / max G`.
fn solve_subgradient(instance: &Instance, budget: usize) -> Result<AllocationSolution> {
    if budget == 0 {
        return invalid("iteration budget must be positive");
    }
    let profile = instance.gap_profile();
    let k = instance.num_actions();
    let best = profile.best_index;
    let free = constraint_value(instance, &with_optimal_mass(instance, &vec![0.0; k]))?;
    if free >= 1.0 {
        return finish(instance, vec![0.0; k], SolverMethod::Subgradient, 0);
    }

    let subs: Vec<usize> = (0..k).filter(|&x| x != best).collect();
    let to_alpha = |w: &[f64]| -> Vec<f64> {
        let mut alpha = vec![0.0; k];
        for (i, &x) in subs.iter().enumerate() {
            alpha[x] = w[i] / profile.gaps[x];
        }
        alpha[best] = OPTIMAL_ARM_MASS;
        alpha
    };

    let mut w = vec![1.0 / subs.len() as f64; subs.len()];
    let mut best_w = w.clone();
    let mut best_g = f64::NEG_INFINITY;
    for it in 1..=budget {
        let alpha = to_alpha(&w);
        let (terms, inv) = constraint_terms(instance, &alpha)?;
        let &(z, g) = terms
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one suboptimal action");
        if g > best_g {
            best_g = g;
            best_w.clone_from(&w);
        }
        let b: DVector<f64> = instance.actions().get(best) - instance.actions().get(z);
        let vb = &inv * &b;
        let norm = vb.dot(&b);
        let coef = profile.gaps[z] * profile.gaps[z] / (2.0 * norm * norm);
        let grad: Vec<f64> = subs
            .iter()
            .map(|&x| {
                let proj = instance.actions().get(x).dot(&vb);
                coef * proj * proj / profile.gaps[x] / g.max(1e-300)
            })
            .collect();
        let scale = grad.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(scale > 0.0) {
            break;
        }
        let step = 0.5 / (it as f64).sqrt() / scale;
        let mut total = 0.0;
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi *= (step * gi).exp();
            total += *wi;
        }
        w.iter_mut().for_each(|wi| *wi /= total);
    }

    let mut sub = to_alpha(&best_w);
    sub[best] = 0.0;
    let c = feasible_scale(instance, &sub)?;
    if !c.is_finite() {
        return Err(Error::Convergence {
            iterations: budget,
            residual: best_g,
        });
    }
    sub.iter_mut().for_each(|a| *a *= c);
    finish(instance, sub, SolverMethod::Subgradient, budget)
}

/// Grid resolution for [`brute_force_cstar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per coordinate including zero; `None` picks by dimension.
    pub points_per_axis: Option<usize>,
    /// Smallest nonzero relative weight on the log grid.
    pub min_ratio: f64,
    /// Polish the best grid points with a local search.
    pub refine: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_axis: None,
            min_ratio: 1e-4,
            refine: true,
        }
    }
}

pub const MAX_BRUTE_FORCE_ARMS: usize = 4;
const REFINE_STARTS: usize = 10;

/// Grid search over allocation directions on suboptimal actions. Every
/// direction is rescaled to feasibility, so the result is an upper bound on
/// `c*` that tightens with the grid.
pub fn brute_force_cstar(instance: &Instance, grid: GridSpec) -> Result<AllocationSolution> {
    let k = instance.num_actions();
    let best = instance.gap_profile().best_index;
    let subs: Vec<usize> = (0..k).filter(|&x| x != best).collect();
    if subs.len() > MAX_BRUTE_FORCE_ARMS {
        return invalid(format!(
            "grid oracle supports at most {MAX_BRUTE_FORCE_ARMS} suboptimal actions, got {}",
            subs.len()
        ));
    }
    let n = grid.points_per_axis.unwrap_or(match subs.len() {
        0..=2 => 60,
        3 => 25,
        _ => 12,
    });
    if n < 2 || !(grid.min_ratio > 0.0 && grid.min_ratio < 1.0) {
        return invalid("grid needs at least 2 points per axis and a ratio in (0, 1)");
    }
    let mut axis = vec![0.0];
    let steps = n - 1;
    for i in 0..steps {
        let frac = if steps == 1 { 1.0 } else { i as f64 / (steps - 1) as f64 };
        axis.push(grid.min_ratio.powf(1.0 - frac));
    }

    let free = constraint_value(instance, &with_optimal_mass(instance, &vec![0.0; k]))?;
    if free >= 1.0 {
        return finish(instance, vec![0.0; k], SolverMethod::BruteForce, 1);
    }
    // Best few grid points, kept sorted by cost, and the best point of every
    // support pattern.
    let mut leaders: Vec<(f64, Vec<f64>)> = Vec::with_capacity(REFINE_STARTS + 1);
    let mut by_support: Vec<Option<(f64, Vec<f64>)>> = vec![None; 1 << subs.len()];
    let mut index = vec![0usize; subs.len()];
    let mut evaluated = 0usize;
    loop {
        let mut dir = vec![0.0; k];
        for (slot, &x) in index.iter().zip(&subs) {
            dir[x] = axis[*slot];
        }
        if dir.iter().any(|&a| a > 0.0) {
            evaluated += 1;
            let c = feasible_scale(instance, &dir)?;
            if c.is_finite() {
                let cost = c * cost_of(instance, &dir);
                let pattern = index
                    .iter()
                    .enumerate()
                    .fold(0usize, |m, (i, &slot)| if slot > 0 { m | (1 << i) } else { m });
                if by_support[pattern].as_ref().map_or(true, |(v, _)| cost < *v) {
                    by_support[pattern] = Some((cost, dir.iter().map(|a| a * c).collect()));
                }
                if leaders.len() < REFINE_STARTS || cost < leaders[leaders.len() - 1].0 {
                    let at = leaders.partition_point(|(v, _)| *v <= cost);
                    leaders.insert(at, (cost, dir.iter().map(|a| a * c).collect()));
                    leaders.truncate(REFINE_STARTS);
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == index.len() {
                if leaders.is_empty() {
                    return Err(Error::Numerical("no grid direction reaches feasibility".into()));
                }
                if grid.refine {
                    leaders.extend(by_support.iter_mut().filter_map(Option::take));
                    for lead in leaders.iter_mut() {
                        let (alpha, extra) = refine(instance, &subs, lead.1.clone(), lead.0, grid.min_ratio)?;
                        evaluated += extra;
                        *lead = (cost_of(instance, &alpha), alpha);
                    }
                }
                let best_alpha = leaders
                    .into_iter()
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, a)| a)
                    .expect("nonempty");
                return finish(instance, best_alpha, SolverMethod::BruteForce, evaluated);
            }
            index[pos] += 1;
            if index[pos] < axis.len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}

/// Multiplicative compass search from a grid point. Coordinates move
/// by `exp(+-h)`, zero coordinates may switch on at `min_ratio` of the
/// largest one and small ones may switch off. Pairwise transfers get past
/// kinks where the binding alternative changes; `h` halves on failure.
fn refine(
    instance: &Instance,
    subs: &[usize],
    mut alpha: Vec<f64>,
    mut cost: f64,
    min_ratio: f64,
) -> Result<(Vec<f64>, usize)> {
    let mut evaluated = 0;
    let mut h = 1.0_f64;
    let mut try_dir = |dir: &[f64], cost: &mut f64, alpha: &mut Vec<f64>| -> Result<bool> {
        evaluated += 1;
        let c = feasible_scale(instance, dir)?;
        if !c.is_finite() {
            return Ok(false);
        }
        let value = c * cost_of(instance, dir);
        if value < *cost * (1.0 - 1e-12) {
            *cost = value;
            *alpha = dir.iter().map(|a| a * c).collect();
            return Ok(true);
        }
        Ok(false)
    };
    while h > 1e-4 {
        let mut improved = false;
        for &x in subs {
            let top = subs.iter().map(|&y| alpha[y]).fold(0.0_f64, f64::max);
            let candidates: Vec<f64> = if alpha[x] > 0.0 {
                let mut c = vec![alpha[x] * h.exp(), alpha[x] * (-h).exp()];
                if alpha[x] < top * min_ratio {
                    c.push(0.0);
                }
                c
            } else {
                vec![top * min_ratio]
            };
            for v in candidates {
                let mut dir = alpha.clone();
                dir[x] = v;
                if try_dir(&dir, &mut cost, &mut alpha)? {
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            'pairs: for &x in subs {
                for &y in subs {
                    if x == y || alpha[x] <= 0.0 || alpha[y] <= 0.0 {
                        continue;
                    }
                    let mut dir = alpha.clone();
                    dir[x] *= h.exp();
                    dir[y] *= (-h).exp();
                    if try_dir(&dir, &mut cost, &mut alpha)? {
                        improved = true;
                        break 'pairs;
                    }
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Ok((alpha, evaluated))
}

/// The value the EOO example is commonly quoted with, printed next to the
/// solver output for comparison.
pub const EOO_REFERENCE_CSTAR: f64 = 64.0;

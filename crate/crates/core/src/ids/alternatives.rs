//! Empirical leader, optimistic gap estimates and alternative parameters.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::environment::{argmax_by, ActionSet};
use crate::error::{invalid, Error, Result};
use crate::estimator::{quad_form, EstimatorState};

/// Closest parameter to the estimate (in `V`-norm) inside some set of
/// alternatives, with half its squared distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub nu: DVector<f64>,
    pub half_sq_dist: f64,
}

/// Output of [`gap_estimates`].
#[derive(Debug, Clone, PartialEq)]
pub struct GapEstimates {
    pub gaps: Vec<f64>,
    pub delta_s: f64,
    pub hat_x: usize,
    pub ucb_x: usize,
}

pub fn best_empirical_action(est: &EstimatorState, actions: &ActionSet) -> usize {
    actions.argmax(est.theta_hat())
}

/// `argmax_x <x, theta> + sqrt(beta) |x|_{V^-1}`, lowest index on ties.
pub fn ucb_action(est: &EstimatorState, actions: &ActionSet, beta: f64) -> usize {
    let root = beta.max(0.0).sqrt();
    argmax_by(
        actions
            .iter()
            .map(|x| x.dot(est.theta_hat()) + root * est.inv_norm(x)),
    )
}

/// Optimistic gap estimates `max_z (<z, theta> + sqrt(beta) |z|_{V^-1}) - <x, theta>`.
pub fn gap_estimates(est: &EstimatorState, actions: &ActionSet, beta_gap: f64) -> GapEstimates {
    let root = beta_gap.max(0.0).sqrt();
    let means: Vec<f64> = actions.iter().map(|x| x.dot(est.theta_hat())).collect();
    let indices: Vec<f64> = actions
        .iter()
        .zip(&means)
        .map(|(x, m)| m + root * est.inv_norm(x))
        .collect();
    let ucb_x = argmax_by(indices.iter().copied());
    let hat_x = argmax_by(means.iter().copied());
    let top = indices[ucb_x];
    let gaps: Vec<f64> = means.iter().map(|m| top - m).collect();
    GapEstimates {
        delta_s: gaps[hat_x],
        gaps,
        hat_x,
        ucb_x,
    }
}

/// Closed-form projection of the estimate onto `{nu : <nu, z - hat_x> >= 0}`.
///
/// When `z` already beats `hat_x` under the estimate the constraint is
/// inactive and the estimate itself is returned at distance zero.
pub fn alternative_halfspace(
    est: &EstimatorState,
    actions: &ActionSet,
    hat_x: usize,
    z: usize,
) -> Result<Alternative> {
    if hat_x == z {
        return invalid("alternative requested for the empirical leader itself");
    }
    if hat_x >= actions.len() || z >= actions.len() {
        return invalid("action index out of range");
    }
    let theta = est.theta_hat();
    let diff = actions.get(hat_x) - actions.get(z);
    let margin = theta.dot(&diff);
    if margin <= 0.0 {
        return Ok(Alternative {
            nu: theta.clone(),
            half_sq_dist: 0.0,
        });
    }
    let dir = est.precision_inv() * &diff;
    let norm_sq = diff.dot(&dir);
    if !(norm_sq > 0.0) {
        return Err(Error::Numerical(format!(
            "degenerate direction between actions {hat_x} and {z}"
        )));
    }
    let nu = theta - dir * (margin / norm_sq);
    Ok(Alternative {
        nu,
        half_sq_dist: margin * margin / (2.0 * norm_sq),
    })
}

/// Active sets up to this many candidates are enumerated exactly; larger
/// problems use Dykstra's alternating projections.
const MAX_ENUMERATED_ACTIVE_SETS: usize = 20_000;
const CELL_TOL: f64 = 1e-8;
const DYKSTRA_MAX_SWEEPS: usize = 10_000;

/// Closest parameter to the estimate for which action `z` is optimal.
///
/// Solves `min |nu - theta|_V^2` subject to `<nu, z - x> >= 0` for every `x`.
pub fn alternative_cell(est: &EstimatorState, actions: &ActionSet, z: usize) -> Result<Alternative> {
    if z >= actions.len() {
        return invalid("action index out of range");
    }
    let normals: Vec<DVector<f64>> = (0..actions.len())
        .filter(|&x| x != z)
        .map(|x| actions.get(z) - actions.get(x))
        .filter(|a| a.amax() > 0.0)
        .collect();
    let nu = project_polyhedral_cone(est.theta_hat(), est.precision(), est.precision_inv(), &normals)?;
    let diff = &nu - est.theta_hat();
    Ok(Alternative {
        half_sq_dist: 0.5 * quad_form(est.precision(), &diff),
        nu,
    })
}

/// `V`-norm projection of `theta` onto the cone `{nu : <a_i, nu> >= 0 for all i}`.
pub(crate) fn project_polyhedral_cone(
    theta: &DVector<f64>,
    precision: &DMatrix<f64>,
    precision_inv: &DMatrix<f64>,
    normals: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let violation = |nu: &DVector<f64>| {
        normals
            .iter()
            .map(|a| (-a.dot(nu)) / a.norm())
            .fold(0.0f64, f64::max)
    };
    if violation(theta) <= 0.0 {
        return Ok(theta.clone());
    }
    let d = theta.len();
    let count = active_set_count(normals.len(), d);
    if count <= MAX_ENUMERATED_ACTIVE_SETS {
        if let Some(nu) = enumerate_active_sets(theta, precision, precision_inv, normals) {
            return Ok(nu);
        }
    }
    dykstra(theta, precision_inv, normals)
}

fn active_set_count(m: usize, d: usize) -> usize {
    let mut total = 0usize;
    let mut binom = 1usize;
    for j in 0..=d.min(m) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul(m - j) / (j + 1);
    }
    total
}

fn enumerate_active_sets(
    theta: &DVector<f64>,
    precision: &DMatrix<f64>,
    precision_inv: &DMatrix<f64>,
    normals: &[DVector<f64>],
) -> Option<DVector<f64>> {
    let d = theta.len();
    let m = normals.len();
    let scale = theta.norm().max(1.0);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut subset: Vec<usize> = Vec::with_capacity(d);

    fn visit(
        start: usize,
        subset: &mut Vec<usize>,
        ctx: &mut dyn FnMut(&[usize]),
        m: usize,
        d: usize,
    ) {
        ctx(subset);
        if subset.len() == d {
            return;
        }
        for i in start..m {
            subset.push(i);
            visit(i + 1, subset, ctx, m, d);
            subset.pop();
        }
    }

    let mut check = |s: &[usize]| {
        if s.is_empty() {
            return;
        }
        let r = s.len();
        let w: Vec<DVector<f64>> = s.iter().map(|&i| precision_inv * &normals[i]).collect();
        let gram = DMatrix::from_fn(r, r, |i, j| normals[s[i]].dot(&w[j]));
        let rhs = DVector::from_fn(r, |i, _| -normals[s[i]].dot(theta));
        let Some(chol) = Cholesky::new(gram.clone()) else {
            return;
        };
        let diag_min = chol.l_dirty().diagonal().min();
        if !(diag_min > 1e-10 * gram.diagonal().max().sqrt()) {
            return;
        }
        let lambda = chol.solve(&rhs);
        if lambda.iter().any(|&l| l < -1e-12 * scale) {
            return;
        }
        let mut nu = theta.clone();
        for (l, wi) in lambda.iter().zip(&w) {
            nu.axpy(*l, wi, 1.0);
        }
        let feasible = normals
            .iter()
            .all(|a| a.dot(&nu) >= -CELL_TOL * a.norm() * nu.norm().max(1.0));
        if !feasible {
            return;
        }
        let diff = &nu - theta;
        let obj = quad_form(precision, &diff);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, nu));
        }
    };
    visit(0, &mut subset, &mut check, m, d);
    best.map(|(_, nu)| nu)
}

fn dykstra(
    theta: &DVector<f64>,
    precision_inv: &DMatrix<f64>,
    normals: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let dirs: Vec<DVector<f64>> = normals.iter().map(|a| precision_inv * a).collect();
    let norms: Vec<f64> = normals.iter().zip(&dirs).map(|(a, w)| a.dot(w)).collect();
    let mut x = theta.clone();
    let mut incr: Vec<DVector<f64>> = vec![DVector::zeros(theta.len()); normals.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let before = x.clone();
        for i in 0..normals.len() {
            let y = &x + &incr[i];
            let v = normals[i].dot(&y);
            let mut proj = y.clone();
            if v < 0.0 {
                proj.axpy(-v / norms[i], &dirs[i], 1.0);
            }
            incr[i] = &y - &proj;
            x = proj;
        }
        let moved = (&x - &before).amax();
        let violation = normals
            .iter()
            .map(|a| (-a.dot(&x)) / a.norm())
            .fold(0.0f64, f64::max);
        residual = moved.max(violation);
        if residual <= CELL_TOL * x.norm().max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::Convergence {
        iterations: DYKSTRA_MAX_SWEEPS,
        residual,
    })
}

/// `<nu - theta, x>` for each action, used by the information gain.
pub(crate) fn alignment(
    alt: &Alternative,
    theta: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    (&alt.nu - theta).dot(x)
}

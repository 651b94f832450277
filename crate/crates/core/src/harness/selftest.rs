//! Quick invariant suites bundled with the binary.

use nalgebra::{DMatrix, DVector};

use crate::environment::{make_eoo_instance, make_orthonormal_instance};
use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::ids::{ids_distribution, ids_step, GainKind, IdsAlgoState, IdsConfig, InfoGainVariant};
use crate::lowerbound::{solve_cstar, SolverMethod};
use crate::policy::Policy;
use crate::rng::RngStream;

fn fail(msg: String) -> Result<()> {
    Err(Error::InvariantViolation(msg))
}

fn estimator_matches_batch() -> Result<()> {
    let d = 8;
    let mut rng = RngStream::new(101, 0);
    let mut est = EstimatorState::new(d)?;
    let mut v = DMatrix::<f64>::identity(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for _ in 0..1000 {
        let x = DVector::from_fn(d, |_, _| rng.standard_normal());
        let y = rng.standard_normal();
        est.update(&x, y)?;
        v += &x * x.transpose();
        b += &x * y;
    }
    let theta = v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("batch system not positive definite".into()))?
        .solve(&b);
    let rel = (est.theta_hat() - &theta).norm() / theta.norm().max(1e-300);
    if rel > 1e-8 {
        return fail(format!("incremental estimate differs from batch by {rel:.3e}"));
    }
    Ok(())
}

fn distribution_beats_singletons() -> Result<()> {
    let mut rng = RngStream::new(102, 0);
    for _ in 0..200 {
        let gaps: Vec<f64> = (0..6).map(|_| 0.01 + rng.uniform()).collect();
        let info: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
        let (mu, psi) = ids_distribution(&gaps, &info, 0, false)?;
        if mu.support().len() > 2 {
            return fail("support larger than two".into());
        }
        for x in 0..6 {
            if info[x] > 0.0 && psi > gaps[x] * gaps[x] / info[x] * (1.0 + 1e-12) {
                return fail(format!("ratio {psi} worse than action {x}"));
            }
        }
    }
    Ok(())
}

fn eoo_run_with_checks() -> Result<()> {
    let inst = make_eoo_instance(0.01, 0.1f64.sqrt())?;
    for kind in [GainKind::Halfspace, GainKind::HalfspaceUcb] {
        let cfg = IdsConfig {
            check_invariants: true,
            ..IdsConfig::new(InfoGainVariant::new(kind))
        };
        let mut state = IdsAlgoState::new(2, inst.noise_std(), cfg)?;
        let mut rng = RngStream::new(103, 0);
        for _ in 0..2000 {
            ids_step(&mut state, &inst, &mut rng)?;
            state.audit(&inst)?;
        }
    }
    Ok(())
}

fn orthonormal_lower_bound() -> Result<()> {
    let inst = make_orthonormal_instance(0.5, 1.0)?;
    let sol = solve_cstar(&inst, SolverMethod::Subgradient, 1000)?;
    if (sol.cost - 4.0).abs() > 0.08 {
        return fail(format!("orthonormal c* = {} instead of 4", sol.cost));
    }
    Ok(())
}

/// Runs every suite and reports `(name, outcome)`.
pub fn selftest() -> Vec<(&'static str, Result<()>)> {
    vec![
        ("estimator-batch", estimator_matches_batch()),
        ("ids-distribution", distribution_beats_singletons()),
        ("eoo-invariants", eoo_run_with_checks()),
        ("lower-bound", orthonormal_lower_bound()),
    ]
}

use super::jet::{jacobian, SmoothMap};
use super::linalg::{pinv_solve, RealVector};
use crate::error::{Error, Result};

/// Cap on step halvings in the damped Gauss–Newton line search.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub root: RealVector,
    pub residual: f64,
    pub iterations: usize,
}

fn residual_of(system: &dyn SmoothMap, x: &RealVector) -> Option<(RealVector, f64)> {
    let r = system.eval(x).ok()?;
    let n = r.norm();
    n.is_finite().then_some((r, n))
}

/// Damped Gauss–Newton with minimum-norm steps.
///
/// Square nonsingular systems take plain Newton steps. Over- and
/// underdetermined systems take least-squares / minimum-norm steps. Each
/// step is halved up to [`MAX_HALVINGS`] times until the residual norm
/// decreases. Failure carries the best iterate and its residual.
pub fn newton_solve(
    system: &dyn SmoothMap,
    guess: &RealVector,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonReport> {
    if guess.len() != system.dim_in() {
        return Err(Error::DimensionMismatch { expected: system.dim_in(), got: guess.len() });
    }
    let mut x = guess.clone();
    let (mut r, mut rn) = match residual_of(system, &x) {
        Some(v) => v,
        None => {
            return Err(Error::Evaluation("system not evaluable at the initial guess".into()))
        }
    };
    if rn <= tol {
        return Ok(NewtonReport { root: x, residual: rn, iterations: 0 });
    }
    for it in 1..=max_iter {
        let j = match jacobian(system, &x) {
            Ok(j) => j,
            Err(_) => break,
        };
        let step = pinv_solve(&j, &(-&r), 1e-13);
        if step.norm() == 0.0 || !step.iter().all(|v| v.is_finite()) {
            break;
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &step * lambda;
            if let Some((tr, tn)) = residual_of(system, &trial) {
                if tn < rn {
                    accepted = Some((trial, tr, tn));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((nx, nr, nn)) => {
                x = nx;
                r = nr;
                rn = nn;
            }
            None => break,
        }
        if rn <= tol {
            return Ok(NewtonReport { root: x, residual: rn, iterations: it });
        }
    }
    Err(Error::NoConvergence { best: x.iter().copied().collect(), residual: rn, iterations: max_iter })
}

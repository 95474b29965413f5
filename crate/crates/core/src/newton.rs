//! Damped Newton iteration with Armijo backtracking on the residual 2-norm.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 60, min_step: 1.0 / 1024.0 }
    }
}

/// Solves `F(x) = 0` from `x0`. `jac` returns the Jacobian at `x`.
pub fn damped_newton<F, J>(
    mut x: DVector<f64>,
    residual: F,
    jac: J,
    opts: &NewtonOptions,
) -> Result<(DVector<f64>, NewtonReport)>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64>,
{
    let mut report = NewtonReport::default();
    let mut r = residual(&x);
    let mut nr = r.norm();
    report.residual_history.push(nr);
    for it in 0..opts.max_iter {
        if !nr.is_finite() {
            return Err(Error::NonFinite(format!("Newton residual at iteration {it}")));
        }
        if nr <= opts.tol {
            report.iterations = it;
            return Ok((x, report));
        }
        let jm = jac(&x, &r);
        let dx = jm
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::Fit(format!("singular Newton Jacobian at iteration {it}")))?;
        let mut lam = 1.0;
        loop {
            let xn = &x + &dx * lam;
            let rn = residual(&xn);
            let nrn = rn.norm();
            if nrn.is_finite() && nrn < (1.0 - 1e-4 * lam) * nr {
                x = xn;
                r = rn;
                nr = nrn;
                break;
            }
            lam *= 0.5;
            if lam < opts.min_step {
                // Accept a full step once the residual is already at roundoff level.
                if nr < 1e3 * opts.tol {
                    report.iterations = it;
                    return Ok((x, report));
                }
                return Err(Error::MaxIterations(format!(
                    "Newton stagnated at iteration {it}; residual history {:?}",
                    report.residual_history
                )));
            }
        }
        report.residual_history.push(nr);
    }
    if nr <= opts.tol {
        report.iterations = opts.max_iter;
        return Ok((x, report));
    }
    Err(Error::MaxIterations(format!(
        "Newton did not converge; residual history {:?}",
        report.residual_history
    )))
}

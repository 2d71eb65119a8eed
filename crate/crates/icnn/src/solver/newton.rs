//! Projected Newton ascent for the bundle-entropy dual
//!
//! ```text
//! maximize_l  (G1 + h)^T l - 1^T log(1 + exp(G^T l))
//! subject to  l >= 0, 1^T l = 1
//! ```
//!
//! Newton directions are projected onto the simplex with Armijo
//! backtracking along the projection arc, falling back to a projected
//! gradient step when the Newton arc fails to improve. The returned point
//! is feasible and its objective is within 1e-8 of the optimum for the
//! small systems produced by the bundle method.

use ndarray::{Array1, Array2};

use super::{simplex_project, softplus_vec, SolverError};
use crate::linalg::solve_dense;
use crate::net::sigmoid;

const MAX_ITERS: usize = 30;
const HESS_REG: f64 = 1e-8;
const PG_STOP: f64 = 1e-10;
const ARMIJO_C: f64 = 1e-4;

/// Dual objective value at `lambda`.
pub fn dual_objective(g: &Array2<f64>, h: &Array1<f64>, lambda: &Array1<f64>) -> f64 {
    let w = g.t().dot(lambda);
    let lin = (g.dot(&Array1::ones(g.ncols())) + h).dot(lambda);
    lin - softplus_vec(&w)
}

fn dual_gradient(g: &Array2<f64>, h: &Array1<f64>, lambda: &Array1<f64>) -> Array1<f64> {
    // grad = h + G y(l) with y(l) = sigmoid(-G^T l)
    let w = g.t().dot(lambda);
    h + &g.dot(&w.mapv(|v| sigmoid(-v)))
}

/// Maximizes the dual over the probability simplex. `g` is the cut matrix
/// (one row per cut), `h` the offsets.
pub fn proj_newton_logistic(
    g: &Array2<f64>,
    h: &Array1<f64>,
) -> Result<Array1<f64>, SolverError> {
    let k = g.nrows();
    if k == 0 || h.len() != k {
        return Err(SolverError::InvalidArgument(format!(
            "need >= 1 cut rows and matching offsets, got {} rows / {} offsets",
            k,
            h.len()
        )));
    }
    if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("dual system entries".into()));
    }
    if k == 1 {
        return Ok(Array1::ones(1));
    }

    let mut lambda = Array1::from_elem(k, 1.0 / k as f64);
    for _ in 0..MAX_ITERS {
        let grad = dual_gradient(g, h, &lambda);
        let pg = simplex_project(&(&lambda + &grad)) - &lambda;
        if pg.iter().fold(0.0f64, |a, v| a.max(v.abs())) <= PG_STOP {
            break;
        }
        let phi0 = dual_objective(g, h, &lambda);

        // Newton direction on the regularized Hessian of -phi.
        let w = g.t().dot(&lambda);
        let curv = w.mapv(|v| {
            let s = sigmoid(-v);
            s * (1.0 - s)
        });
        let mut hess = Array2::zeros((k, k));
        for r in 0..k {
            for c in 0..k {
                let mut acc = 0.0;
                for j in 0..g.ncols() {
                    acc += g[(r, j)] * curv[j] * g[(c, j)];
                }
                hess[(r, c)] = acc + if r == c { HESS_REG } else { 0.0 };
            }
        }
        let newton = solve_dense(hess, grad.clone()).map(|(d, _)| d);

        let mut accepted = false;
        if let Some(dir) = newton {
            let mut step = 1.0;
            for _ in 0..40 {
                let cand = simplex_project(&(&lambda + &dir.mapv(|v| step * v)));
                let dd = grad.dot(&(&cand - &lambda));
                if dd > 0.0 && dual_objective(g, h, &cand) >= phi0 + ARMIJO_C * dd {
                    lambda = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            // Projected gradient arc always yields an ascent direction.
            // Near-duplicate cuts make the dual valley almost flat with a
            // tiny gradient, so start the backtracking from a large trial
            // step; unit steps would creep at |grad|^2 per iteration.
            let mut step = (1u64 << 30) as f64;
            for _ in 0..90 {
                let cand = simplex_project(&(&lambda + &grad.mapv(|v| step * v)));
                let dd = grad.dot(&(&cand - &lambda));
                if dd > 0.0 && dual_objective(g, h, &cand) >= phi0 + ARMIJO_C * dd {
                    lambda = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            break; // no improving step representable in f64
        }
    }
    Ok(lambda)
}

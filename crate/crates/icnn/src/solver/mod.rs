//! Convex inference over the unit box `[0,1]^n`.
//!
//! The workhorse is [`bundle_entropy`], a cutting-plane method on
//! `f(x,y) - eps*H(y)` whose subproblem has a sigmoid closed form through a
//! simplex-constrained dual solved by [`proj_newton_logistic`]. A plain
//! projected (sub)gradient loop is provided for comparison.

mod bundle;
mod newton;

pub use bundle::{bundle_entropy, bundle_entropy_traced, BundleOptions, BundleState, SolveReport};
pub use newton::{dual_objective, proj_newton_logistic};

use ndarray::Array1;
use thiserror::Error;

use crate::net::{sigmoid, softplus};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("entropy domain error: component {index} = {value} not strictly inside (0,1)")]
    EntropyDomain { index: usize, value: f64 },
    #[error("oracle returned a non-finite value at iteration {iter}")]
    NonFiniteOracle { iter: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trace i/o error: {0}")]
    TraceIo(#[from] std::io::Error),
}

pub(crate) fn check_interior(y: &Array1<f64>) -> Result<(), SolverError> {
    for (index, &value) in y.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            return Err(SolverError::EntropyDomain { index, value });
        }
    }
    Ok(())
}

/// Elementwise binary entropy summed over components,
/// `H(y) = -sum(y log y + (1-y) log(1-y))`. Strictly interior input only.
pub fn entropy(y: &Array1<f64>) -> Result<f64, SolverError> {
    check_interior(y)?;
    Ok(y.iter()
        .map(|&v| -(v * v.ln() + (1.0 - v) * (1.0 - v).ln()))
        .sum())
}

/// Gradient of [`entropy`]: `-log(y_i / (1 - y_i))` per component.
pub fn entropy_grad(y: &Array1<f64>) -> Result<Array1<f64>, SolverError> {
    check_interior(y)?;
    Ok(y.mapv(|v| -(v / (1.0 - v)).ln()))
}

/// Entropy extended continuously to the closed box (`0 log 0 = 0`), for
/// evaluating objectives at clipped points. The gradient still diverges at
/// the boundary, so this is a value-only extension.
pub fn entropy_extended(y: &Array1<f64>) -> f64 {
    y.iter()
        .map(|&v| {
            let a = if v > 0.0 { v * v.ln() } else { 0.0 };
            let b = if v < 1.0 { (1.0 - v) * (1.0 - v).ln() } else { 0.0 };
            -(a + b)
        })
        .sum()
}

/// Closed-form minimizer of `c^T y - H(y)` over the open unit box:
/// `y* = 1 / (1 + exp(c))` componentwise.
pub fn solve_entropy_linear(c: &Array1<f64>) -> Array1<f64> {
    c.mapv(|v| sigmoid(-v))
}

#[derive(Clone, Copy, Debug)]
pub struct PgOptions {
    pub steps: usize,
    pub step_size: f64,
    pub momentum: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions {
            steps: 100,
            step_size: 0.01,
            momentum: 0.9,
        }
    }
}

/// Projected gradient descent with momentum over the unit box:
/// `v <- mu v - alpha grad`, `y <- clip(y + v, 0, 1)`.
/// Non-convergence is a quality issue, not an error.
pub fn projected_gradient<F>(mut oracle: F, y0: &Array1<f64>, opts: &PgOptions) -> Array1<f64>
where
    F: FnMut(&Array1<f64>) -> (f64, Array1<f64>),
{
    let mut y = y0.mapv(|v| v.clamp(0.0, 1.0));
    let mut vel: Array1<f64> = Array1::zeros(y.len());
    for _ in 0..opts.steps {
        let (_, grad) = oracle(&y);
        vel = vel.mapv(|v| opts.momentum * v) - grad.mapv(|g| opts.step_size * g);
        y = (&y + &vel).mapv(|v| v.clamp(0.0, 1.0));
    }
    y
}

/// Euclidean projection onto the probability simplex
/// `{v : v >= 0, sum v = 1}` by the sort-and-threshold rule.
pub fn simplex_project(v: &Array1<f64>) -> Array1<f64> {
    let n = v.len();
    assert!(n > 0, "cannot project an empty vector");
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut rho = 0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            rho = j + 1;
            tau = t;
        }
    }
    debug_assert!(rho > 0);
    v.mapv(|x| (x - tau).max(0.0))
}

/// `softplus` applied elementwise; shared by the dual objective.
pub(crate) fn softplus_vec(w: &Array1<f64>) -> f64 {
    w.iter().map(|&v| softplus(v)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn entropy_at_half_is_n_log2() {
        for n in [1usize, 4, 9] {
            let y = Array1::from_elem(n, 0.5);
            let h = entropy(&y).unwrap();
            assert!((h - n as f64 * std::f64::consts::LN_2).abs() < 1e-12);
            let g = entropy_grad(&y).unwrap();
            assert!(g.iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn entropy_vanishes_toward_the_corners() {
        let n = 3;
        for v in [1e-12, 1.0 - 1e-12] {
            let y = Array1::from_elem(n, v);
            let h = entropy(&y).unwrap();
            assert!(h.abs() <= 1e-9 * n as f64);
        }
    }

    #[test]
    fn entropy_hand_value() {
        // -[0.25 ln 0.25 + 0.75 ln 0.75]
        let h = entropy(&arr1(&[0.25])).unwrap();
        assert!((h - 0.5623351446188083).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_boundary() {
        assert!(entropy(&arr1(&[0.0])).is_err());
        assert!(entropy(&arr1(&[1.0])).is_err());
        assert!(entropy(&arr1(&[0.5, -0.1])).is_err());
        assert!(entropy_grad(&arr1(&[1.5])).is_err());
    }

    #[test]
    fn entropy_extended_matches_interior_and_covers_corners() {
        let y = arr1(&[0.3, 0.8]);
        assert!((entropy_extended(&y) - entropy(&y).unwrap()).abs() < 1e-15);
        assert_eq!(entropy_extended(&arr1(&[0.0, 1.0])), 0.0);
    }

    #[test]
    fn entropy_linear_closed_form() {
        let y = solve_entropy_linear(&arr1(&[0.0, 0.0]));
        assert_eq!(y, arr1(&[0.5, 0.5]));
        let y = solve_entropy_linear(&arr1(&[3.0f64.ln()]));
        assert!((y[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn entropy_linear_matches_grid_search() {
        let c = 0.73;
        let y = solve_entropy_linear(&arr1(&[c]))[0];
        let mut best = (f64::INFINITY, 0.0);
        let mut t = 1e-5;
        while t < 1.0 {
            let obj = c * t + t * t.ln() + (1.0 - t) * (1.0 - t).ln();
            if obj < best.0 {
                best = (obj, t);
            }
            t += 1e-5;
        }
        assert!((y - best.1).abs() <= 1e-4);
    }

    #[test]
    fn projected_gradient_quadratic_converges() {
        let y = projected_gradient(
            |y| {
                let d = y[0] - 0.3;
                (d * d, arr1(&[2.0 * d]))
            },
            &arr1(&[0.9]),
            &PgOptions {
                steps: 200,
                step_size: 0.1,
                momentum: 0.0,
            },
        );
        assert!((y[0] - 0.3).abs() <= 1e-3);
    }

    #[test]
    fn projected_gradient_zero_gradient_is_identity() {
        let y0 = arr1(&[0.2, 0.8]);
        let y = projected_gradient(
            |y| (0.0, Array1::zeros(y.len())),
            &y0,
            &PgOptions::default(),
        );
        assert_eq!(y, y0);
    }

    #[test]
    fn projected_gradient_hits_boundary_on_linear_objective() {
        let y = projected_gradient(
            |y| (y[0], arr1(&[1.0])),
            &arr1(&[0.7]),
            &PgOptions {
                steps: 300,
                step_size: 0.05,
                momentum: 0.3,
            },
        );
        assert!(y[0].abs() < 1e-9);
    }

    #[test]
    fn simplex_project_hand_cases() {
        assert_eq!(simplex_project(&arr1(&[0.6, 0.6])), arr1(&[0.5, 0.5]));
        assert_eq!(simplex_project(&arr1(&[1.2, -0.3])), arr1(&[1.0, 0.0]));
    }

    #[test]
    fn simplex_project_is_feasible() {
        let cases = [
            arr1(&[10.0, -5.0, 0.1]),
            arr1(&[0.0, 0.0, 0.0, 0.0]),
            arr1(&[-3.0]),
            arr1(&[0.25, 0.25, 0.25, 0.25]),
        ];
        for v in cases {
            let p = simplex_project(&v);
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.sum() - 1.0).abs() <= 1e-12);
        }
    }
}

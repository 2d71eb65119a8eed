//! The bundle entropy method: cutting-plane minimization of
//! `f(x,y) - eps*H(y)` over the unit box. Each iteration appends the cut
//! `g_i^T y + h_i` (a global underestimator of the convex `f`), solves the
//! simplex dual, recovers the next iterate through the sigmoid closed form,
//! and prunes cuts whose dual weight hit zero.

use std::io::Write;

use ndarray::{Array1, Array2};

use super::newton::{dual_objective, proj_newton_logistic};
use super::{check_interior, entropy, SolverError};
use crate::net::sigmoid;

#[derive(Clone, Copy, Debug)]
pub struct BundleOptions {
    /// Number of bundle iterations K.
    pub iterations: usize,
    /// Weight on the entropy barrier; 1 recovers the plain formulation.
    pub epsilon: f64,
}

impl Default for BundleOptions {
    fn default() -> Self {
        BundleOptions {
            iterations: 5,
            epsilon: 1.0,
        }
    }
}

/// Active cutting-plane set at the end of a solve. Row `i` of `g` is the
/// energy gradient at `points[i]`, and `h[i]` the matching offset, so each
/// active cut satisfies `g_i^T y + h_i <= f(x, y)` for every `y`.
#[derive(Clone, Debug)]
pub struct BundleState {
    pub g: Array2<f64>,
    pub h: Array1<f64>,
    pub lambda: Array1<f64>,
    pub points: Vec<Array1<f64>>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Final iterate, strictly interior to the box.
    pub y: Array1<f64>,
    /// `f(x, y) - eps*H(y)` at the final iterate.
    pub objective: f64,
    /// Dual value: a lower bound on the minimum of the objective.
    pub lower_bound: f64,
    /// `objective - lower_bound`.
    pub gap: f64,
    pub iterations: usize,
    pub bundle: BundleState,
}

struct Cuts {
    rows: Vec<Array1<f64>>,
    offsets: Vec<f64>,
    points: Vec<Array1<f64>>,
}

impl Cuts {
    fn matrix(&self, n: usize) -> Array2<f64> {
        let mut g = Array2::zeros((self.rows.len(), n));
        for (i, r) in self.rows.iter().enumerate() {
            g.row_mut(i).assign(r);
        }
        g
    }

    fn retain_positive(&mut self, lambda: &Array1<f64>) -> Array1<f64> {
        let keep: Vec<usize> = (0..self.rows.len()).filter(|&i| lambda[i] > 0.0).collect();
        let mut rows = Vec::with_capacity(keep.len());
        let mut offsets = Vec::with_capacity(keep.len());
        let mut points = Vec::with_capacity(keep.len());
        let mut lam = Vec::with_capacity(keep.len());
        for &i in &keep {
            rows.push(self.rows[i].clone());
            offsets.push(self.offsets[i]);
            points.push(self.points[i].clone());
            lam.push(lambda[i]);
        }
        self.rows = rows;
        self.offsets = offsets;
        self.points = points;
        Array1::from_vec(lam)
    }
}

/// Runs K iterations of the bundle entropy method from the interior start
/// `y1`. The oracle returns `(f(x,y), grad_y f(x,y))`; `x` is bound inside
/// it. See [`bundle_entropy_traced`] for the per-iteration CSV trace.
pub fn bundle_entropy<F>(
    oracle: F,
    y1: &Array1<f64>,
    opts: &BundleOptions,
) -> Result<SolveReport, SolverError>
where
    F: FnMut(&Array1<f64>) -> (f64, Array1<f64>),
{
    bundle_entropy_traced(oracle, y1, opts, Option::<&mut Vec<u8>>::None)
}

/// As [`bundle_entropy`], writing one CSV row per iteration
/// (`iter,f_tilde,lower_bound,gap,active_cuts`) to `trace`.
pub fn bundle_entropy_traced<F, W>(
    mut oracle: F,
    y1: &Array1<f64>,
    opts: &BundleOptions,
    mut trace: Option<&mut W>,
) -> Result<SolveReport, SolverError>
where
    F: FnMut(&Array1<f64>) -> (f64, Array1<f64>),
    W: Write,
{
    if opts.iterations == 0 {
        return Err(SolverError::InvalidArgument(
            "bundle entropy needs K >= 1".into(),
        ));
    }
    if !(opts.epsilon > 0.0) {
        return Err(SolverError::InvalidArgument(
            "entropy weight must be positive".into(),
        ));
    }
    check_interior(y1)?;
    let n = y1.len();
    let eps = opts.epsilon;

    if let Some(w) = trace.as_deref_mut() {
        writeln!(w, "iter,f_tilde,lower_bound,gap,active_cuts")?;
    }

    let mut cuts = Cuts {
        rows: Vec::new(),
        offsets: Vec::new(),
        points: Vec::new(),
    };
    let mut y = y1.clone();
    let mut lambda = Array1::ones(1);
    let mut lower_bound = f64::NEG_INFINITY;

    for iter in 1..=opts.iterations {
        let (f, grad) = oracle(&y);
        if !f.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteOracle { iter });
        }
        if grad.len() != n {
            return Err(SolverError::InvalidArgument(format!(
                "oracle gradient has length {}, expected {}",
                grad.len(),
                n
            )));
        }
        let f_tilde = f - eps * entropy(&y)?;
        cuts.offsets.push(f - grad.dot(&y));
        cuts.rows.push(grad);
        cuts.points.push(y.clone());

        let g_mat = cuts.matrix(n);
        let g_scaled = g_mat.mapv(|v| v / eps);
        let h_scaled = Array1::from_vec(cuts.offsets.clone()).mapv(|v| v / eps);
        lambda = if cuts.rows.len() == 1 {
            Array1::ones(1)
        } else {
            proj_newton_logistic(&g_scaled, &h_scaled)?
        };
        lower_bound = eps * dual_objective(&g_scaled, &h_scaled, &lambda);
        // Strictly interior by construction, but the sigmoid underflows to
        // exactly 0/1 in f64 once |G^T lambda| exceeds ~745; clamp so the
        // next entropy evaluation stays in-domain.
        y = g_mat
            .t()
            .dot(&lambda)
            .mapv(|v| sigmoid(-v / eps).clamp(1e-12, 1.0 - 1e-12));

        lambda = cuts.retain_positive(&lambda);
        if let Some(w) = trace.as_deref_mut() {
            writeln!(
                w,
                "{},{},{},{},{}",
                iter,
                f_tilde,
                lower_bound,
                f_tilde - lower_bound,
                cuts.rows.len()
            )?;
        }
    }

    let (f_final, grad_final) = oracle(&y);
    if !f_final.is_finite() || grad_final.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFiniteOracle {
            iter: opts.iterations + 1,
        });
    }
    let objective = f_final - eps * entropy(&y)?;
    let g = cuts.matrix(n);
    Ok(SolveReport {
        y,
        objective,
        lower_bound,
        gap: objective - lower_bound,
        iterations: opts.iterations,
        bundle: BundleState {
            g,
            h: Array1::from_vec(cuts.offsets),
            lambda,
            points: cuts.points,
            iterations: opts.iterations,
        },
    })
}

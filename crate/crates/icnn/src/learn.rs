//! Training: argmin differentiation through the bundle-entropy solution,
//! max-margin subgradient steps, losses, and ADAM with feasibility
//! projection after every update.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::linalg::solve_dense;
use crate::net::{
    forward, grad_input, grad_params, grad_params_dirderiv, project_params, Activation,
    Gradients, NetError, Params,
};
use crate::solver::{
    bundle_entropy, entropy_extended, BundleOptions, PgOptions, SolveReport, SolverError,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("prediction component {index} = {value} sits on the box boundary")]
    Boundary { index: usize, value: f64 },
    #[error("reduced KKT system is singular even after regularization")]
    SingularKkt,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Training losses on predictions strictly inside the unit box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    SquaredError,
    BinaryCrossEntropy,
}

impl Loss {
    pub fn value(self, y_hat: &Array1<f64>, y_star: &Array1<f64>) -> f64 {
        match self {
            Loss::SquaredError => y_hat
                .iter()
                .zip(y_star.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            Loss::BinaryCrossEntropy => y_hat
                .iter()
                .zip(y_star.iter())
                .map(|(&p, &t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
                .sum(),
        }
    }

    pub fn grad(self, y_hat: &Array1<f64>, y_star: &Array1<f64>) -> Array1<f64> {
        match self {
            Loss::SquaredError => {
                Array1::from_iter(y_hat.iter().zip(y_star.iter()).map(|(a, b)| 2.0 * (a - b)))
            }
            Loss::BinaryCrossEntropy => Array1::from_iter(
                y_hat
                    .iter()
                    .zip(y_star.iter())
                    .map(|(&p, &t)| -t / p + (1.0 - t) / (1.0 - p)),
            ),
        }
    }
}

/// Solution of the implicit-differentiation linear system
///
/// ```text
/// [ D   G^T  0 ] [c_y]   [-grad_loss]
/// [ G   0   -1 ] [c_l] = [ 0        ]
/// [ 0  -1^T  0 ] [c_t]   [ 0        ]
/// ```
///
/// with `D = diag(1/y + 1/(1-y))`, solved by eliminating `c_y` and
/// inverting the reduced (k+1)-system on the Schur complement
/// `S = G D^-1 G^T`.
#[derive(Clone, Debug)]
pub struct KktFactors {
    pub c_y: Array1<f64>,
    pub c_lambda: Array1<f64>,
    pub c_t: f64,
    /// The KKT diagonal `1/y + 1/(1-y)`.
    pub d_diag: Array1<f64>,
}

const PIVOT_FLOOR: f64 = 1e-12;
const SCHUR_REG: f64 = 1e-10;

pub fn kkt_solve(
    y_hat: &Array1<f64>,
    g: &Array2<f64>,
    grad_loss: &Array1<f64>,
) -> Result<KktFactors, LearnError> {
    let n = y_hat.len();
    let k = g.nrows();
    if k == 0 || g.ncols() != n || grad_loss.len() != n {
        return Err(LearnError::InvalidArgument(format!(
            "kkt dims: y {}, G {}x{}, grad {}",
            n,
            k,
            g.ncols(),
            grad_loss.len()
        )));
    }
    for (index, &value) in y_hat.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            return Err(LearnError::Boundary { index, value });
        }
    }
    let d_diag = y_hat.mapv(|v| 1.0 / v + 1.0 / (1.0 - v));
    let d_inv = d_diag.mapv(|v| 1.0 / v);

    let schur = |reg: f64| {
        let mut m = Array2::zeros((k + 1, k + 1));
        for r in 0..k {
            for c in 0..k {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += g[(r, j)] * d_inv[j] * g[(c, j)];
                }
                m[(r, c)] = acc + if r == c { reg } else { 0.0 };
            }
            m[(r, k)] = 1.0;
            m[(k, r)] = 1.0;
        }
        m
    };
    let mut rhs = Array1::zeros(k + 1);
    for r in 0..k {
        let mut acc = 0.0;
        for j in 0..n {
            acc += g[(r, j)] * d_inv[j] * grad_loss[j];
        }
        rhs[r] = -acc;
    }

    let solution = match solve_dense(schur(0.0), rhs.clone()) {
        Some((sol, min_pivot)) if min_pivot >= PIVOT_FLOOR => sol,
        _ => solve_dense(schur(SCHUR_REG), rhs)
            .map(|(sol, _)| sol)
            .ok_or(LearnError::SingularKkt)?,
    };

    let c_lambda = solution.slice(ndarray::s![..k]).to_owned();
    let c_t = solution[k];
    let c_y = Array1::from_shape_fn(n, |j| {
        let gt = (0..k).map(|r| g[(r, j)] * c_lambda[r]).sum::<f64>();
        -d_inv[j] * (grad_loss[j] + gt)
    });
    Ok(KktFactors {
        c_y,
        c_lambda,
        c_t,
        d_diag,
    })
}

/// Result of one argmin-differentiation pass.
#[derive(Debug)]
pub struct ArgminDiff {
    pub grads: Gradients,
    pub y_hat: Array1<f64>,
    pub loss: f64,
    /// Active cuts in the final bundle; the gradient accumulation makes
    /// exactly this many calls each to `grad_params` and
    /// `grad_params_dirderiv`.
    pub active_cuts: usize,
    pub report: SolveReport,
}

/// Builds an energy oracle `y -> (f, grad_y f)` for fixed params and x.
pub fn energy_oracle<'a>(
    params: &'a Params,
    x: Option<&'a Array1<f64>>,
) -> impl Fn(&Array1<f64>) -> (f64, Array1<f64>) + 'a {
    move |y: &Array1<f64>| {
        let (value, tape) = forward(params, x.map(|v| v.view()), y.view())
            .expect("oracle dims validated by caller");
        (value, grad_input(params, &tape))
    }
}

/// Runs the bundle entropy method for exactly `k_iters` iterations, then
/// backpropagates the loss through the solution via the KKT factors:
/// per active cut `i`, the total gradient accumulates
/// `c_l[i] * grad_params(y_i) + dirderiv(y_i, lambda_i c_y + c_l[i] (y_hat - y_i))`.
pub fn argmin_diff_grad(
    params: &Params,
    x: Option<&Array1<f64>>,
    y_star: &Array1<f64>,
    k_iters: usize,
    loss: Loss,
) -> Result<ArgminDiff, LearnError> {
    let n = params.spec().input_dim_y;
    if y_star.len() != n {
        return Err(LearnError::InvalidArgument(format!(
            "target has length {}, spec wants {n}",
            y_star.len()
        )));
    }
    let y1 = Array1::from_elem(n, 0.5);
    let opts = BundleOptions {
        iterations: k_iters,
        epsilon: 1.0,
    };
    let report = bundle_entropy(energy_oracle(params, x), &y1, &opts)?;
    let y_hat = report.y.clone();
    let loss_value = loss.value(&y_hat, y_star);
    let grad_loss = loss.grad(&y_hat, y_star);

    let bundle = &report.bundle;
    let kkt = kkt_solve(&y_hat, &bundle.g, &grad_loss)?;

    let mut total = Gradients::zeros_like(params);
    for (i, point) in bundle.points.iter().enumerate() {
        let (_, tape) = forward(params, x.map(|v| v.view()), point.view())?;
        let direction = &kkt.c_y * bundle.lambda[i] + (&y_hat - point) * kkt.c_lambda[i];
        total.axpy(kkt.c_lambda[i], &grad_params(params, &tape));
        total.axpy(1.0, &grad_params_dirderiv(params, &tape, &direction)?);
    }
    Ok(ArgminDiff {
        grads: total,
        y_hat,
        loss: loss_value,
        active_cuts: bundle.points.len(),
        report,
    })
}

/// Result of one unrolled projected-gradient training pass.
#[derive(Debug)]
pub struct PgUnroll {
    pub grads: Gradients,
    pub y_hat: Array1<f64>,
    pub loss: f64,
}

/// Differentiates the loss through an unrolled projected-gradient solve
/// (`v <- mu v - alpha grad`, `y <- clip(y + v)`, fixed step count) by
/// reverse accumulation: each step contributes
/// `-alpha * grad_params_dirderiv(y_t, vbar_t)`. Only relu networks are
/// supported, where the input Hessian vanishes almost everywhere and the
/// unrolled chain closes over existing derivative operations.
pub fn pg_unroll_grad(
    params: &Params,
    x: Option<&Array1<f64>>,
    y_star: &Array1<f64>,
    opts: &PgOptions,
    loss: Loss,
) -> Result<PgUnroll, LearnError> {
    let spec = params.spec();
    if spec.activation != Activation::Relu {
        return Err(LearnError::InvalidArgument(
            "projected-gradient unrolling requires relu activations".into(),
        ));
    }
    let n = spec.input_dim_y;
    if y_star.len() != n {
        return Err(LearnError::InvalidArgument(format!(
            "target has length {}, spec wants {n}",
            y_star.len()
        )));
    }
    let steps = opts.steps;
    let (alpha, mu) = (opts.step_size, opts.momentum);

    // Forward unroll, recording iterates and pre-clip sums.
    let mut ys: Vec<Array1<f64>> = Vec::with_capacity(steps + 1);
    let mut raws: Vec<Array1<f64>> = Vec::with_capacity(steps);
    ys.push(Array1::from_elem(n, 0.5));
    let mut vel: Array1<f64> = Array1::zeros(n);
    for t in 0..steps {
        let (_, tape) = forward(params, x.map(|v| v.view()), ys[t].view())?;
        let g = grad_input(params, &tape);
        vel = vel.mapv(|v| mu * v) - g.mapv(|g| alpha * g);
        let raw = &ys[t] + &vel;
        ys.push(raw.mapv(|v| v.clamp(0.0, 1.0)));
        raws.push(raw);
    }
    let y_hat = ys[steps].clone();
    let loss_value = loss.value(&y_hat, y_star);

    // Reverse accumulation. ybar is the cotangent of y_{t+1}; vbar_tail the
    // part of v_{t+1}'s cotangent flowing back from later velocity updates.
    let mut total = Gradients::zeros_like(params);
    let mut ybar = loss.grad(&y_hat, y_star);
    let mut vbar_tail: Array1<f64> = Array1::zeros(n);
    for t in (0..steps).rev() {
        let pass = raws[t].mapv(|r| if r > 0.0 && r < 1.0 { 1.0 } else { 0.0 });
        let rawbar = &ybar * &pass;
        let vbar = &vbar_tail + &rawbar;
        let (_, tape) = forward(params, x.map(|v| v.view()), ys[t].view())?;
        total.axpy(-alpha, &grad_params_dirderiv(params, &tape, &vbar)?);
        ybar = rawbar;
        vbar_tail = vbar.mapv(|v| mu * v);
    }
    Ok(PgUnroll {
        grads: total,
        y_hat,
        loss: loss_value,
    })
}

/// ADAM hyperparameters (bias-corrected variant).
#[derive(Clone, Copy, Debug)]
pub struct AdamCfg {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamCfg {
    fn default() -> Self {
        AdamCfg {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, shape-congruent with the parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub cfg: AdamCfg,
}

impl AdamState {
    pub fn new(params: &Params, cfg: AdamCfg) -> AdamState {
        let n = params.num_params();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            cfg,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected ADAM step followed by the feasibility projection.
pub fn adam_update(state: &mut AdamState, params: &mut Params, grads: &Gradients) {
    let g = grads.0.flatten();
    let mut p = params.flatten();
    assert_eq!(g.len(), state.m.len(), "gradient/state shape mismatch");
    assert_eq!(p.len(), state.m.len(), "param/state shape mismatch");
    state.step += 1;
    let t = state.step as f64;
    let c = state.cfg;
    let bias1 = 1.0 - c.beta1.powf(t);
    let bias2 = 1.0 - c.beta2.powf(t);
    for i in 0..p.len() {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g[i] * g[i];
        let mhat = state.m[i] / bias1;
        let vhat = state.v[i] / bias2;
        p[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
    }
    params.assign_flat(&p);
    project_params(params);
}

/// Zeroes every gradient tensor outside the x-path, so ADAM only moves the
/// feedforward component (used by the trivial-PICNN baseline).
pub fn restrict_to_x_path(grads: &mut Gradients) {
    for mut entry in grads.0.tensors_mut() {
        let keep = entry.name.starts_with("w_x") || entry.name.starts_with("b_x");
        if !keep {
            for v in entry.tensor.as_slice_mut() {
                *v = 0.0;
            }
        }
    }
}

/// Configuration for one max-margin subgradient step.
pub struct MaxMarginCfg {
    pub reg: f64,
    pub step: f64,
    pub bundle: BundleOptions,
}

pub struct MaxMarginStep {
    pub params: Params,
    pub violated: bool,
    pub y_aug: Array1<f64>,
    /// Structured hinge value before the update.
    pub hinge: f64,
}

/// Multiclass margin `delta(y_label, y) = y_label^T (1 - y)`.
pub fn margin(y_label: &Array1<f64>, y: &Array1<f64>) -> f64 {
    y_label.dot(&y.mapv(|v| 1.0 - v))
}

/// Solves the loss-augmented inference problem with the bundle entropy
/// method (the margin is linear in y, so convexity is preserved), applies
/// the subgradient update only when the margin is violated, then projects.
pub fn max_margin_step(
    params: &Params,
    x: Option<&Array1<f64>>,
    y_label: &Array1<f64>,
    cfg: &MaxMarginCfg,
) -> Result<MaxMarginStep, LearnError> {
    let n = params.spec().input_dim_y;
    if y_label.len() != n {
        return Err(LearnError::InvalidArgument(format!(
            "label has length {}, spec wants {n}",
            y_label.len()
        )));
    }
    let base = energy_oracle(params, x);
    let augmented = |y: &Array1<f64>| {
        let (f, g) = base(y);
        (f - margin(y_label, y), g + y_label)
    };
    let report = bundle_entropy(augmented, &Array1::from_elem(n, 0.5), &cfg.bundle)?;
    let y_aug = report.y.clone();

    // f_tilde by continuous extension: binary labels sit on the boundary
    // where H is 0 by limit.
    let f_at = |y: &Array1<f64>| {
        forward(params, x.map(|v| v.view()), y.view()).map(|(v, _)| v - entropy_extended(y))
    };
    let hinge = f_at(y_label)? - (f_at(&y_aug)? - margin(y_label, &y_aug));

    let mut updated = params.clone();
    let violated = hinge > 0.0;
    if violated && cfg.step != 0.0 {
        let (_, tape_label) = forward(params, x.map(|v| v.view()), y_label.view())?;
        let (_, tape_aug) = forward(params, x.map(|v| v.view()), y_aug.view())?;
        let g_label = grad_params(params, &tape_label);
        let g_aug = grad_params(params, &tape_aug);
        updated = margin_subgradient_update(params, &g_label, &g_aug, cfg.reg, cfg.step);
    }
    Ok(MaxMarginStep {
        params: updated,
        violated,
        y_aug,
        hinge,
    })
}

/// The projected subgradient update
/// `P_+[theta - step*(reg*theta + g_label - g_aug)]`; when the two energy
/// gradients cancel this reduces to shrinkage plus projection.
pub fn margin_subgradient_update(
    params: &Params,
    g_label: &Gradients,
    g_aug: &Gradients,
    reg: f64,
    step: f64,
) -> Params {
    let mut updated = params.clone();
    let mut flat = updated.flatten();
    let gl = g_label.0.flatten();
    let ga = g_aug.0.flatten();
    for i in 0..flat.len() {
        flat[i] -= step * (reg * flat[i] + gl[i] - ga[i]);
    }
    updated.assign_flat(&flat);
    project_params(&mut updated);
    updated
}

/// How predictions are produced (and differentiated) during training. The
/// budget is fixed either way so predictions stay a deterministic function
/// of the parameters.
#[derive(Clone, Copy, Debug)]
pub enum TrainInference {
    /// Bundle entropy solve with argmin differentiation through its KKT
    /// system.
    Bundle { iterations: usize },
    /// Unrolled projected gradient descent (relu networks only).
    ProjectedGradient(PgOptions),
}

impl TrainInference {
    pub fn bundle(iterations: usize) -> TrainInference {
        TrainInference::Bundle { iterations }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FitCfg {
    pub epochs: usize,
    pub batch: usize,
    pub inference: TrainInference,
    pub loss: Loss,
    pub seed: u64,
    pub adam: AdamCfg,
    /// Train only the x-path (feedforward baseline through the trivial
    /// PICNN embedding).
    pub x_path_only: bool,
}

impl Default for FitCfg {
    fn default() -> Self {
        FitCfg {
            epochs: 10,
            batch: 32,
            inference: TrainInference::Bundle { iterations: 5 },
            loss: Loss::SquaredError,
            seed: 0,
            adam: AdamCfg::default(),
            x_path_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
}

/// Minibatch training loop: seeded shuffle per epoch, per-batch averaged
/// argmin-differentiation gradients, one ADAM step per batch, reduction in
/// example-index order for determinism. `on_epoch` observes the parameters
/// after each epoch (for evaluation logging).
pub fn fit<F>(
    params: &Params,
    data: &Dataset,
    cfg: &FitCfg,
    mut on_epoch: F,
) -> Result<(Params, Vec<EpochLog>), LearnError>
where
    F: FnMut(usize, &Params, f64),
{
    if data.is_empty() {
        return Err(LearnError::InvalidArgument("empty dataset".into()));
    }
    if cfg.batch == 0 {
        return Err(LearnError::InvalidArgument("batch size must be >= 1".into()));
    }
    let uses_x = params.spec().input_dim_x > 0;
    let mut current = params.clone();
    let mut adam = AdamState::new(&current, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut grads = Gradients::zeros_like(&current);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let x_row = uses_x.then(|| data.x_row(i));
                let (g, l) = match cfg.inference {
                    TrainInference::Bundle { iterations } => {
                        let out = argmin_diff_grad(
                            &current,
                            x_row.as_ref(),
                            &data.y_row(i),
                            iterations,
                            cfg.loss,
                        )?;
                        (out.grads, out.loss)
                    }
                    TrainInference::ProjectedGradient(opts) => {
                        let out = pg_unroll_grad(
                            &current,
                            x_row.as_ref(),
                            &data.y_row(i),
                            &opts,
                            cfg.loss,
                        )?;
                        (out.grads, out.loss)
                    }
                };
                grads.axpy(1.0 / chunk.len() as f64, &g);
                batch_loss += l / chunk.len() as f64;
            }
            if cfg.x_path_only {
                restrict_to_x_path(&mut grads);
            }
            adam_update(&mut adam, &mut current, &grads);
            epoch_loss += batch_loss;
            batches += 1.0;
        }
        let train_loss = epoch_loss / batches;
        on_epoch(epoch, &current, train_loss);
        log.push(EpochLog { epoch, train_loss });
    }
    Ok((current, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Activation, NetworkSpec};
    use ndarray::arr1;

    #[test]
    fn loss_gradients_match_finite_differences() {
        let y_hat = arr1(&[0.3, 0.6, 0.9]);
        let y_star = arr1(&[0.0, 1.0, 1.0]);
        for loss in [Loss::SquaredError, Loss::BinaryCrossEntropy] {
            let g = loss.grad(&y_hat, &y_star);
            for j in 0..3 {
                let h = 1e-7;
                let mut p = y_hat.clone();
                let mut m = y_hat.clone();
                p[j] += h;
                m[j] -= h;
                let fd = (loss.value(&p, &y_star) - loss.value(&m, &y_star)) / (2.0 * h);
                assert!((g[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{loss:?}[{j}]");
            }
        }
    }

    #[test]
    fn kkt_zero_rhs_gives_zero_factors() {
        let y = arr1(&[0.4, 0.7]);
        let g = ndarray::arr2(&[[0.3, -0.2], [0.1, 0.5]]);
        let f = kkt_solve(&y, &g, &Array1::zeros(2)).unwrap();
        assert!(f.c_y.iter().all(|&v| v == 0.0));
        assert!(f.c_lambda.iter().all(|&v| v == 0.0));
        assert_eq!(f.c_t, 0.0);
    }

    #[test]
    fn kkt_lambda_block_sums_to_zero() {
        let y = arr1(&[0.2, 0.5, 0.8]);
        let g = ndarray::arr2(&[[1.0, 0.3, -0.4], [0.2, -0.6, 0.9]]);
        let f = kkt_solve(&y, &g, &arr1(&[0.5, -1.0, 0.25])).unwrap();
        assert!(f.c_lambda.sum().abs() <= 1e-9);
    }

    #[test]
    fn kkt_residual_on_full_system() {
        // Multiply the full 3-block matrix back and compare to the RHS.
        let y = arr1(&[0.35, 0.55, 0.75]);
        let g = ndarray::arr2(&[[0.7, -0.3, 0.1], [-0.2, 0.4, 0.8]]);
        let grad = arr1(&[0.9, -0.1, 0.3]);
        let f = kkt_solve(&y, &g, &grad).unwrap();
        let (n, k) = (3, 2);
        for j in 0..n {
            let lhs = f.d_diag[j] * f.c_y[j]
                + (0..k).map(|r| g[(r, j)] * f.c_lambda[r]).sum::<f64>();
            assert!((lhs + grad[j]).abs() <= 1e-8 * (1.0 + grad[j].abs()));
        }
        for r in 0..k {
            let lhs = (0..n).map(|j| g[(r, j)] * f.c_y[j]).sum::<f64>() - f.c_t;
            assert!(lhs.abs() <= 1e-8);
        }
        assert!(f.c_lambda.sum().abs() <= 1e-9);
    }

    #[test]
    fn kkt_rejects_boundary_prediction() {
        let y = arr1(&[0.0, 0.5]);
        let g = ndarray::arr2(&[[1.0, 1.0]]);
        assert!(matches!(
            kkt_solve(&y, &g, &arr1(&[0.1, 0.1])),
            Err(LearnError::Boundary { index: 0, .. })
        ));
    }

    #[test]
    fn kkt_survives_duplicate_cuts_via_regularization() {
        let y = arr1(&[0.4, 0.6]);
        let g = ndarray::arr2(&[[0.5, -0.1], [0.5, -0.1]]);
        let f = kkt_solve(&y, &g, &arr1(&[0.2, 0.2])).unwrap();
        assert!(f.c_lambda.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let spec = NetworkSpec::ficnn(2, vec![3], Activation::Relu);
        let mut params = init_params(&spec, 3, 0.5).unwrap();
        let before = params.clone();
        let mut adam = AdamState::new(&params, AdamCfg::default());
        let grads = Gradients::zeros_like(&params);
        adam_update(&mut adam, &mut params, &grads);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_keeps_feasibility() {
        let spec = NetworkSpec::ficnn(2, vec![3], Activation::Relu);
        let mut params = init_params(&spec, 3, 0.5).unwrap();
        let mut adam = AdamState::new(&params, AdamCfg::default());
        let mut grads = Gradients::zeros_like(&params);
        let flat: Vec<f64> = (0..params.num_params()).map(|i| (i as f64).sin()).collect();
        grads.0.assign_flat(&flat);
        for _ in 0..50 {
            adam_update(&mut adam, &mut params, &grads);
        }
        assert!(params.min_constrained_entry().unwrap() >= 0.0);
    }

    #[test]
    fn adam_constant_gradient_approaches_signed_lr_steps() {
        // With a constant gradient the bias-corrected update tends to a
        // step of lr * sign(g) per entry.
        let spec = NetworkSpec::ficnn(1, vec![], Activation::Relu);
        let mut params = init_params(&spec, 1, 0.5).unwrap();
        let mut grads = Gradients::zeros_like(&params);
        let n = params.num_params();
        grads.0.assign_flat(&vec![0.7; n]);
        let cfg = AdamCfg {
            lr: 1e-3,
            ..AdamCfg::default()
        };
        let mut adam = AdamState::new(&params, cfg);
        for _ in 0..5000 {
            adam_update(&mut adam, &mut params, &grads);
        }
        let before = params.flatten();
        adam_update(&mut adam, &mut params, &grads);
        let after = params.flatten();
        for (b, a) in before.iter().zip(after.iter()) {
            let step = b - a;
            assert!((step - 1e-3).abs() <= 1e-3 * 1e-3 + 1e-6, "step {step}");
        }
    }

    #[test]
    fn fit_zero_epochs_is_identity() {
        let spec = NetworkSpec::picnn(2, 2, vec![3], vec![2], Activation::Relu);
        let params = init_params(&spec, 1, 0.3).unwrap();
        let data = Dataset::new(
            ndarray::arr2(&[[0.0, 1.0]]),
            ndarray::arr2(&[[0.3, 0.7]]),
        )
        .unwrap();
        let cfg = FitCfg {
            epochs: 0,
            ..FitCfg::default()
        };
        let (out, log) = fit(&params, &data, &cfg, |_, _, _| {}).unwrap();
        assert_eq!(out, params);
        assert!(log.is_empty());
    }

    #[test]
    fn fit_is_deterministic() {
        let spec = NetworkSpec::picnn(2, 2, vec![3], vec![2], Activation::Relu);
        let params = init_params(&spec, 4, 0.3).unwrap();
        let data = Dataset::new(
            ndarray::arr2(&[[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]),
            ndarray::arr2(&[[0.3, 0.7], [0.8, 0.1], [0.5, 0.5]]),
        )
        .unwrap();
        let cfg = FitCfg {
            epochs: 3,
            batch: 2,
            inference: TrainInference::bundle(2),
            seed: 9,
            ..FitCfg::default()
        };
        let (a, la) = fit(&params, &data, &cfg, |_, _, _| {}).unwrap();
        let (b, lb) = fit(&params, &data, &cfg, |_, _, _| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn max_margin_zero_step_keeps_params() {
        let spec = NetworkSpec::picnn(2, 2, vec![2], vec![2], Activation::Relu);
        let params = init_params(&spec, 8, 0.4).unwrap();
        let x = arr1(&[1.0, 0.0]);
        let out = max_margin_step(
            &params,
            Some(&x),
            &arr1(&[1.0, 0.0]),
            &MaxMarginCfg {
                reg: 0.01,
                step: 0.0,
                bundle: BundleOptions::default(),
            },
        )
        .unwrap();
        assert_eq!(out.params, params);
    }
}

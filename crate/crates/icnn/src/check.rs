//! Seeded self-check suite: convexity, gradient correctness, embedding
//! exactness, solver-vs-oracle agreement, dual feasibility, KKT residuals
//! and LP export soundness, each as a named pass/fail check.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::learn::{energy_oracle, kkt_solve};
use crate::net::{
    embed_feedforward, export_lp, forward, grad_input, grad_params, grad_params_dirderiv,
    init_params, project_params, Activation, Feedforward, NetworkSpec, Params,
};
use crate::solver::{
    bundle_entropy, projected_gradient, proj_newton_logistic, solve_entropy_linear,
    BundleOptions, PgOptions,
};

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn(u64) -> Result<(), String>;

const CHECKS: &[(&str, CheckFn)] = &[
    ("convexity-ficnn", check_convexity_ficnn),
    ("convexity-picnn", check_convexity_picnn),
    ("gradient-input", check_gradient_input),
    ("gradient-params", check_gradient_params),
    ("gradient-dirderiv", check_gradient_dirderiv),
    ("embedding-prop2", check_embedding),
    ("solver-closed-form", check_solver_closed_form),
    ("solver-vs-gradient", check_solver_vs_gradient),
    ("dual-feasibility", check_dual_feasibility),
    ("kkt-residual", check_kkt_residual),
    ("lp-export", check_lp_export),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check whose name contains `filter` (all when empty).
pub fn run_all(filter: &str, seed: u64) -> Vec<CheckReport> {
    CHECKS
        .iter()
        .filter(|(name, _)| name.contains(filter))
        .map(|(name, f)| match f(seed) {
            Ok(()) => CheckReport {
                name,
                passed: true,
                detail: "ok".into(),
            },
            Err(detail) => CheckReport {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}

/// Jensen sweep over random triples for one parameter set; exposed so the
/// suite can also be pointed at trained checkpoints (and, in tests, at
/// deliberately corrupted ones).
pub fn check_convexity_params(
    params: &Params,
    triples: usize,
    seed: u64,
) -> Result<(), String> {
    let spec = params.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..triples {
        let x = (spec.input_dim_x > 0).then(|| {
            Array1::from_shape_fn(spec.input_dim_x, |_| rng.gen::<f64>() * 4.0 - 2.0)
        });
        let y1 = Array1::from_shape_fn(spec.input_dim_y, |_| rng.gen::<f64>() * 4.0 - 2.0);
        let y2 = Array1::from_shape_fn(spec.input_dim_y, |_| rng.gen::<f64>() * 4.0 - 2.0);
        let lam: f64 = rng.gen();
        let mid = &y1 * lam + &y2 * (1.0 - lam);
        let ev = |y: &Array1<f64>| {
            forward(params, x.as_ref().map(|v| v.view()), y.view())
                .map(|(v, _)| v)
                .map_err(|e| e.to_string())
        };
        let lhs = ev(&mid)?;
        let rhs = lam * ev(&y1)? + (1.0 - lam) * ev(&y2)?;
        if lhs > rhs + 1e-9 {
            return Err(format!(
                "Jensen violated at triple {t}: f(mid) = {lhs} > {rhs}"
            ));
        }
    }
    Ok(())
}

fn projected(spec: &NetworkSpec, seed: u64) -> Params {
    let mut p = init_params(spec, seed, 0.9).expect("valid spec");
    project_params(&mut p);
    p
}

fn check_convexity_ficnn(seed: u64) -> Result<(), String> {
    for n in [1usize, 2, 8] {
        let spec = NetworkSpec::ficnn(n, vec![6, 4], Activation::Relu);
        check_convexity_params(&projected(&spec, seed + n as u64), 1000, seed)?;
    }
    Ok(())
}

fn check_convexity_picnn(seed: u64) -> Result<(), String> {
    let spec = NetworkSpec::picnn(4, 3, vec![6, 4], vec![5, 4], Activation::Relu);
    check_convexity_params(&projected(&spec, seed), 1000, seed ^ 1)?;
    let spec = NetworkSpec::picnn(4, 2, vec![4], vec![3], Activation::Softplus);
    check_convexity_params(&projected(&spec, seed), 1000, seed ^ 2)
}

fn gradient_specs() -> Vec<NetworkSpec> {
    vec![
        NetworkSpec::ficnn(3, vec![4], Activation::Relu),
        NetworkSpec::ficnn(2, vec![5, 3], Activation::Softplus),
        NetworkSpec::picnn(3, 2, vec![4], vec![3], Activation::Relu),
        NetworkSpec::picnn(2, 3, vec![4, 3], vec![3, 2], Activation::Softplus),
    ]
}

fn kink_free(
    spec: &NetworkSpec,
    rng: &mut ChaCha8Rng,
) -> (Params, Option<Array1<f64>>, Array1<f64>) {
    loop {
        let params = init_params(spec, rng.gen(), 0.8).expect("valid spec");
        let x = (spec.input_dim_x > 0)
            .then(|| Array1::from_shape_fn(spec.input_dim_x, |_| rng.gen::<f64>() * 2.0 - 1.0));
        let y = Array1::from_shape_fn(spec.input_dim_y, |_| rng.gen::<f64>());
        let (_, tape) = forward(&params, x.as_ref().map(|v| v.view()), y.view()).unwrap();
        if tape.min_abs_preactivation() > 1e-3 {
            return (params, x, y);
        }
    }
}

fn fd_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-8 + 1e-4 * a.abs().max(b.abs())
}

fn check_gradient_input(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for spec in gradient_specs() {
        let (params, x, y) = kink_free(&spec, &mut rng);
        let (_, tape) = forward(&params, x.as_ref().map(|v| v.view()), y.view()).unwrap();
        let g = grad_input(&params, &tape);
        for j in 0..y.len() {
            let h = 1e-5;
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            let fp = forward(&params, x.as_ref().map(|v| v.view()), yp.view()).unwrap().0;
            let fm = forward(&params, x.as_ref().map(|v| v.view()), ym.view()).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            if !fd_close(g[j], fd) {
                return Err(format!("grad_input[{j}] = {} but fd = {fd}", g[j]));
            }
        }
    }
    Ok(())
}

fn check_gradient_params(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70);
    for spec in gradient_specs() {
        let (params, x, y) = kink_free(&spec, &mut rng);
        let (_, tape) = forward(&params, x.as_ref().map(|v| v.view()), y.view()).unwrap();
        let g = grad_params(&params, &tape).0.flatten();
        let base = params.flatten();
        for i in 0..base.len() {
            let h = 1e-5;
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut fp = base.clone();
            let mut fm = base.clone();
            fp[i] += h;
            fm[i] -= h;
            plus.assign_flat(&fp);
            minus.assign_flat(&fm);
            let vp = forward(&plus, x.as_ref().map(|v| v.view()), y.view()).unwrap().0;
            let vm = forward(&minus, x.as_ref().map(|v| v.view()), y.view()).unwrap().0;
            let fd = (vp - vm) / (2.0 * h);
            if !fd_close(g[i], fd) {
                return Err(format!("grad_params[{i}] = {} but fd = {fd}", g[i]));
            }
        }
    }
    Ok(())
}

fn check_gradient_dirderiv(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x71);
    for spec in gradient_specs() {
        let (params, x, y) = kink_free(&spec, &mut rng);
        let v = Array1::from_shape_fn(spec.input_dim_y, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let (_, tape) = forward(&params, x.as_ref().map(|w| w.view()), y.view()).unwrap();
        let g = grad_params_dirderiv(&params, &tape, &v)
            .map_err(|e| e.to_string())?
            .0
            .flatten();
        let base = params.flatten();
        for i in 0..base.len() {
            let h = 1e-5;
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut fp = base.clone();
            let mut fm = base.clone();
            fp[i] += h;
            fm[i] -= h;
            plus.assign_flat(&fp);
            minus.assign_flat(&fm);
            let gi = |p: &Params| {
                let (_, tape) = forward(p, x.as_ref().map(|w| w.view()), y.view()).unwrap();
                grad_input(p, &tape).dot(&v)
            };
            let fd = (gi(&plus) - gi(&minus)) / (2.0 * h);
            if !fd_close(g[i], fd) {
                return Err(format!("dirderiv[{i}] = {} but fd = {fd}", g[i]));
            }
        }
    }
    Ok(())
}

fn check_embedding(seed: u64) -> Result<(), String> {
    let ff = Feedforward::init(&[3, 6, 4], Activation::Relu, seed, 0.8)
        .map_err(|e| e.to_string())?;
    let params = embed_feedforward(&ff, 4).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x50);
    for _ in 0..100 {
        let x = Array1::from_shape_fn(3, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y = Array1::from_shape_fn(4, |_| rng.gen::<f64>());
        let fhat = ff.forward(x.view()).map_err(|e| e.to_string())?;
        let (v, _) = forward(&params, Some(x.view()), y.view()).map_err(|e| e.to_string())?;
        if (v - fhat.dot(&y)).abs() > 1e-12 {
            return Err(format!(
                "embedding mismatch: picnn {v} vs inner product {}",
                fhat.dot(&y)
            ));
        }
    }
    Ok(())
}

fn check_solver_closed_form(seed: u64) -> Result<(), String> {
    let ff = Feedforward::init(&[2, 5, 3], Activation::Relu, seed, 0.9)
        .map_err(|e| e.to_string())?;
    let params = embed_feedforward(&ff, 3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
    for _ in 0..20 {
        let x = Array1::from_shape_fn(2, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let report = bundle_entropy(
            energy_oracle(&params, Some(&x)),
            &Array1::from_elem(3, 0.5),
            &BundleOptions {
                iterations: 1,
                epsilon: 1.0,
            },
        )
        .map_err(|e| e.to_string())?;
        let closed = solve_entropy_linear(&ff.forward(x.view()).map_err(|e| e.to_string())?);
        for (a, b) in report.y.iter().zip(closed.iter()) {
            if (a - b).abs() > 1e-6 {
                return Err(format!("bundle {a} vs closed form {b}"));
            }
        }
    }
    Ok(())
}

fn check_solver_vs_gradient(seed: u64) -> Result<(), String> {
    // Bundle entropy (K = 10) against 500 steps of projected gradient on
    // f - H, on small random convex energies.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x52);
    for n in [1usize, 2, 4] {
        let spec = NetworkSpec::picnn(3, n, vec![6], vec![4], Activation::Relu);
        let params = projected(&spec, rng.gen());
        let x = Array1::from_shape_fn(3, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let oracle = energy_oracle(&params, Some(&x));
        let report = bundle_entropy(
            &oracle,
            &Array1::from_elem(n, 0.5),
            &BundleOptions {
                iterations: 10,
                epsilon: 1.0,
            },
        )
        .map_err(|e| e.to_string())?;
        let entropic = |y: &Array1<f64>| {
            let (f, g) = oracle(y);
            let yc = y.mapv(|v| v.clamp(1e-12, 1.0 - 1e-12));
            let h: f64 = yc
                .iter()
                .map(|&v| -(v * v.ln() + (1.0 - v) * (1.0 - v).ln()))
                .sum();
            let hg = yc.mapv(|v| -(v / (1.0 - v)).ln());
            (f - h, g - hg)
        };
        let pg = projected_gradient(
            entropic,
            &Array1::from_elem(n, 0.5),
            &PgOptions {
                steps: 500,
                step_size: 0.05,
                momentum: 0.5,
            },
        );
        for (a, b) in report.y.iter().zip(pg.iter()) {
            if (a - b).abs() > 1e-2 {
                return Err(format!("bundle {a} vs projected gradient {b} (n = {n})"));
            }
        }
    }
    Ok(())
}

fn check_dual_feasibility(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x53);
    for _ in 0..20 {
        let k = 3;
        let g = ndarray::Array2::from_shape_fn((k, 2), |_| rng.gen::<f64>() * 4.0 - 2.0);
        let h = Array1::from_shape_fn(k, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let lam = proj_newton_logistic(&g, &h).map_err(|e| e.to_string())?;
        if lam.iter().any(|&v| v < 0.0) {
            return Err("negative dual weight".into());
        }
        if (lam.sum() - 1.0).abs() > 1e-12 {
            return Err(format!("dual weights sum to {}", lam.sum()));
        }
    }
    Ok(())
}

fn check_kkt_residual(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x54);
    for _ in 0..20 {
        let (n, k) = (3, 2);
        let y = Array1::from_shape_fn(n, |_| 0.05 + 0.9 * rng.gen::<f64>());
        let g = ndarray::Array2::from_shape_fn((k, n), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let grad = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let f = kkt_solve(&y, &g, &grad).map_err(|e| e.to_string())?;
        if f.c_lambda.sum().abs() > 1e-9 {
            return Err(format!("1^T c_lambda = {}", f.c_lambda.sum()));
        }
        for j in 0..n {
            let lhs = f.d_diag[j] * f.c_y[j]
                + (0..k).map(|r| g[(r, j)] * f.c_lambda[r]).sum::<f64>();
            if (lhs + grad[j]).abs() > 1e-8 * (1.0 + grad[j].abs()) {
                return Err(format!("KKT residual row {j}: {}", lhs + grad[j]));
            }
        }
    }
    Ok(())
}

fn check_lp_export(seed: u64) -> Result<(), String> {
    let spec = NetworkSpec::ficnn(2, vec![4, 3], Activation::Relu);
    let params = projected(&spec, seed ^ 0x55);
    let fp = params.as_ficnn().expect("ficnn");
    let text = export_lp(fp).map_err(|e| e.to_string())?;
    if !text.starts_with("OBJECTIVE") {
        return Err("LP missing objective section".into());
    }
    // The relu forward point must satisfy every exported constraint with
    // equality-or-slack, and its objective equals the forward value.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x56);
    for _ in 0..20 {
        let y = Array1::from_shape_fn(2, |_| rng.gen::<f64>());
        let (value, tape) = forward(&params, None, y.view()).map_err(|e| e.to_string())?;
        let k = spec.layer_count();
        for i in 0..k {
            let z_next = tape_layer(&tape, i + 1);
            let pre = compute_pre(fp, &tape, &y, i);
            for j in 0..z_next.len() {
                if z_next[j] < pre[j] - 1e-9 {
                    return Err(format!("forward point infeasible at layer {i} unit {j}"));
                }
                if i < k - 1 && z_next[j] < -1e-12 {
                    return Err(format!("hidden activation negative at layer {i}"));
                }
            }
        }
        let z_out = tape_layer(&tape, k)[0];
        if (z_out - value).abs() > 1e-12 {
            return Err("objective does not match forward value".into());
        }
    }
    Ok(())
}

fn tape_layer(tape: &crate::net::GradTape, i: usize) -> Array1<f64> {
    tape.activations(i)
}

fn compute_pre(
    fp: &crate::net::FicnnParams,
    tape: &crate::net::GradTape,
    y: &Array1<f64>,
    i: usize,
) -> Array1<f64> {
    let mut pre = fp.w_y[i].dot(y) + &fp.b[i];
    if i >= 1 {
        pre += &fp.w_z[i - 1].dot(&tape.activations(i));
    }
    pre
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_fresh_state() {
        let reports = run_all("", 2024);
        for r in &reports {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
        assert_eq!(reports.len(), check_names().len());
    }

    #[test]
    fn filter_selects_subset() {
        let reports = run_all("gradient-", 2024);
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| r.name.contains("gradient")));
    }

    #[test]
    fn corrupted_wz_fails_convexity_check() {
        let spec = NetworkSpec::ficnn(2, vec![4], Activation::Relu);
        let mut params = init_params(&spec, 3, 0.9).unwrap();
        project_params(&mut params);
        if let Params::Ficnn(f) = &mut params {
            f.w_z[0][(0, 0)] = -2.0;
            f.w_y[1][(0, 0)] = 0.0;
        }
        assert!(check_convexity_params(&params, 1000, 7).is_err());
    }
}

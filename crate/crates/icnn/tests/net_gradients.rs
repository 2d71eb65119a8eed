//! Central finite-difference oracles for the three derivative operations.
//! Checks run at kink-free points (no pre-activation within 1e-3 of zero).

use icnn::net::{
    forward, grad_input, grad_params, grad_params_dirderiv, init_params, Activation, NetworkSpec,
    Params,
};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-8;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ABS_TOL + REL_TOL * a.abs().max(b.abs())
}

fn random_inputs(
    spec: &NetworkSpec,
    rng: &mut ChaCha8Rng,
) -> (Option<Array1<f64>>, Array1<f64>) {
    let x = if spec.input_dim_x > 0 {
        Some(Array1::from_shape_fn(spec.input_dim_x, |_| {
            rng.gen::<f64>() * 2.0 - 1.0
        }))
    } else {
        None
    };
    let y = Array1::from_shape_fn(spec.input_dim_y, |_| rng.gen::<f64>());
    (x, y)
}

/// Draws params and inputs until every nonlinearity is safely away from its
/// kink, so the finite-difference stencil stays inside one smooth piece.
fn kink_free_instance(
    spec: &NetworkSpec,
    rng: &mut ChaCha8Rng,
) -> (Params, Option<Array1<f64>>, Array1<f64>) {
    loop {
        let params = init_params(spec, rng.gen(), 0.8).unwrap();
        let (x, y) = random_inputs(spec, rng);
        let (_, tape) = forward(&params, x.as_ref().map(|v| v.view()), y.view()).unwrap();
        if tape.min_abs_preactivation() > 1e-3 {
            return (params, x, y);
        }
    }
}

fn eval(params: &Params, x: &Option<Array1<f64>>, y: &Array1<f64>) -> f64 {
    forward(params, x.as_ref().map(|v| v.view()), y.view())
        .unwrap()
        .0
}

fn eval_grad_input(params: &Params, x: &Option<Array1<f64>>, y: &Array1<f64>) -> Array1<f64> {
    let (_, tape) = forward(params, x.as_ref().map(|v| v.view()), y.view()).unwrap();
    grad_input(params, &tape)
}

fn test_specs() -> Vec<NetworkSpec> {
    vec![
        NetworkSpec::ficnn(2, vec![], Activation::Relu),
        NetworkSpec::ficnn(3, vec![4], Activation::Relu),
        NetworkSpec::ficnn(2, vec![5, 3], Activation::Softplus),
        NetworkSpec::picnn(2, 2, vec![], vec![], Activation::Relu),
        NetworkSpec::picnn(3, 2, vec![4], vec![3], Activation::Relu),
        NetworkSpec::picnn(2, 3, vec![4, 3], vec![3, 2], Activation::Softplus),
        NetworkSpec::picnn(4, 2, vec![3, 3], vec![4, 2], Activation::Relu),
    ]
}

#[test]
fn grad_input_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for spec in test_specs() {
        let (params, x, y) = kink_free_instance(&spec, &mut rng);
        let analytic = eval_grad_input(&params, &x, &y);
        for j in 0..y.len() {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += FD_STEP;
            ym[j] -= FD_STEP;
            let fd = (eval(&params, &x, &yp) - eval(&params, &x, &ym)) / (2.0 * FD_STEP);
            assert!(
                close(analytic[j], fd),
                "{:?} grad_input[{}]: analytic {} vs fd {}",
                spec.kind,
                j,
                analytic[j],
                fd
            );
        }
    }
}

#[test]
fn grad_params_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for spec in test_specs() {
        let (params, x, y) = kink_free_instance(&spec, &mut rng);
        let (_, tape) = forward(&params, x.as_ref().map(|v| v.view()), y.view()).unwrap();
        let analytic = grad_params(&params, &tape).0.flatten();
        let base = params.flatten();
        for i in 0..base.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut fp = base.clone();
            let mut fm = base.clone();
            fp[i] += FD_STEP;
            fm[i] -= FD_STEP;
            plus.assign_flat(&fp);
            minus.assign_flat(&fm);
            let fd = (eval(&plus, &x, &y) - eval(&minus, &x, &y)) / (2.0 * FD_STEP);
            assert!(
                close(analytic[i], fd),
                "{:?} grad_params[{}]: analytic {} vs fd {}",
                spec.kind,
                i,
                analytic[i],
                fd
            );
        }
    }
}

#[test]
fn grad_params_dirderiv_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for spec in test_specs() {
        let (params, x, y) = kink_free_instance(&spec, &mut rng);
        let v = Array1::from_shape_fn(spec.input_dim_y, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let (_, tape) = forward(&params, x.as_ref().map(|w| w.view()), y.view()).unwrap();
        let analytic = grad_params_dirderiv(&params, &tape, &v).unwrap().0.flatten();
        let base = params.flatten();
        for i in 0..base.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut fp = base.clone();
            let mut fm = base.clone();
            fp[i] += FD_STEP;
            fm[i] -= FD_STEP;
            plus.assign_flat(&fp);
            minus.assign_flat(&fm);
            let gp = eval_grad_input(&plus, &x, &y).dot(&v);
            let gm = eval_grad_input(&minus, &x, &y).dot(&v);
            let fd = (gp - gm) / (2.0 * FD_STEP);
            assert!(
                close(analytic[i], fd),
                "{:?} dirderiv[{}]: analytic {} vs fd {}",
                spec.kind,
                i,
                analytic[i],
                fd
            );
        }
    }
}

#[test]
fn dirderiv_is_consistent_with_directional_move_of_grad_params() {
    // Independent cross-check away from finite differences: for softplus
    // nets (C^2 everywhere), ∇_θ(∇_y f^T v) equals the directional
    // derivative of grad_params along y + t v.
    let spec = NetworkSpec::picnn(2, 3, vec![3], vec![2], Activation::Softplus);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let params = init_params(&spec, 77, 0.7).unwrap();
    let x = Some(Array1::from_shape_fn(2, |_| rng.gen::<f64>() - 0.5));
    let y = Array1::from_shape_fn(3, |_| rng.gen::<f64>());
    let v = Array1::from_shape_fn(3, |_| rng.gen::<f64>() - 0.5);

    let (_, tape) = forward(&params, x.as_ref().map(|w| w.view()), y.view()).unwrap();
    let analytic = grad_params_dirderiv(&params, &tape, &v).unwrap().0.flatten();

    let t = 1e-6;
    let shift = |sgn: f64| {
        let yt = &y + &v.mapv(|w| sgn * t * w);
        let (_, tape) = forward(&params, x.as_ref().map(|w| w.view()), yt.view()).unwrap();
        grad_params(&params, &tape).0.flatten()
    };
    let gp = shift(1.0);
    let gm = shift(-1.0);
    for i in 0..analytic.len() {
        let fd = (gp[i] - gm[i]) / (2.0 * t);
        assert!(
            (analytic[i] - fd).abs() <= 1e-6 + 1e-4 * fd.abs().max(analytic[i].abs()),
            "entry {}: {} vs {}",
            i,
            analytic[i],
            fd
        );
    }
}

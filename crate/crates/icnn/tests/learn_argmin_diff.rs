//! Oracles for argmin differentiation: the analytic sigmoid-composition
//! gradient on the trivial PICNN, and central finite differences of the
//! full loss-through-solver map at active-set-stable points.

use icnn::learn::{
    argmin_diff_grad, fit, margin, margin_subgradient_update, max_margin_step, FitCfg, Loss,
    MaxMarginCfg,
};
use icnn::net::{
    embed_feedforward, forward, grad_params, init_params, project_params, Activation,
    Feedforward, NetworkSpec, Params,
};
use icnn::solver::{entropy_extended, bundle_entropy, BundleOptions};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Backprop through a relu feedforward net with an output cotangent:
/// returns d(cot^T ff(x))/d(weights, biases) flattened in layer order.
/// Test-side oracle, independent of the library's gradient code.
fn ff_backprop(ff: &Feedforward, x: &Array1<f64>, cot: &Array1<f64>) -> Vec<f64> {
    let last = ff.weights.len() - 1;
    let mut hs = vec![x.clone()];
    let mut pres = Vec::new();
    for (i, (w, b)) in ff.weights.iter().zip(ff.biases.iter()).enumerate() {
        let a = w.dot(hs.last().unwrap()) + b;
        pres.push(a.clone());
        hs.push(if i == last {
            a
        } else {
            a.mapv(|v| v.max(0.0))
        });
    }
    let mut dw: Vec<ndarray::Array2<f64>> = Vec::new();
    let mut db: Vec<Array1<f64>> = Vec::new();
    let mut delta = cot.clone();
    for i in (0..ff.weights.len()).rev() {
        if i != last {
            delta = &delta * &pres[i].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        }
        let grad_w = ndarray::Array2::from_shape_fn(
            (delta.len(), hs[i].len()),
            |(r, c)| delta[r] * hs[i][c],
        );
        dw.push(grad_w);
        db.push(delta.clone());
        if i > 0 {
            delta = ff.weights[i].t().dot(&delta);
        }
    }
    dw.reverse();
    db.reverse();
    let mut flat = Vec::new();
    for i in 0..dw.len() {
        flat.extend(dw[i].iter().copied());
        flat.extend(db[i].iter().copied());
    }
    flat
}

#[test]
fn trivial_picnn_matches_sigmoid_chain_rule() {
    // On f(x,y) = ff(x)^T y with K = 1, the bundle prediction is exactly
    // sigmoid(-ff(x)) and the loss gradient on the x-path params must equal
    // plain backprop through that composition.
    let ff = Feedforward::init(&[3, 5, 4], Activation::Relu, 21, 0.8).unwrap();
    let params = embed_feedforward(&ff, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let x = Array1::from_shape_fn(3, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y_star = Array1::from_shape_fn(4, |_| if rng.gen::<bool>() { 1.0 } else { 0.0 });

        let out = argmin_diff_grad(&params, Some(&x), &y_star, 1, Loss::SquaredError).unwrap();
        let fhat = ff.forward(x.view()).unwrap();
        let y_hat = fhat.mapv(|v| 1.0 / (1.0 + v.exp()));
        for (a, b) in out.y_hat.iter().zip(y_hat.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }

        // cot = dl/d fhat = -(y(1-y)) ∘ dl/dy
        let grad_loss = Loss::SquaredError.grad(&y_hat, &y_star);
        let cot = Array1::from_shape_fn(4, |j| -y_hat[j] * (1.0 - y_hat[j]) * grad_loss[j]);
        let oracle = ff_backprop(&ff, &x, &cot);

        // The embedded net's x-path tensors come first in canonical order
        // (w_x_0, b_x_0, w_x_1, b_x_1, ...): match against the oracle.
        let got = x_path_block(&out.grads.0);
        assert_eq!(got.len(), oracle.len());
        for (g, o) in got.iter().zip(oracle.iter()) {
            let tol = 1e-6 * (1.0 + o.abs());
            assert!((g - o).abs() <= tol, "grad {} vs oracle {}", g, o);
        }
    }
}

/// Extracts the flattened x-path gradient in (w_x_i, b_x_i) interleaved
/// order to line up with the test oracle.
fn x_path_block(grads: &Params) -> Vec<f64> {
    let p = grads.as_picnn().expect("picnn gradients");
    let mut flat = Vec::new();
    for i in 0..p.w_x.len() {
        flat.extend(p.w_x[i].iter().copied());
        flat.extend(p.b_x[i].iter().copied());
    }
    flat
}

#[test]
fn zero_loss_gradient_gives_zero_parameter_gradient() {
    let spec = NetworkSpec::picnn(2, 3, vec![4], vec![3], Activation::Softplus);
    let mut params = init_params(&spec, 17, 0.5).unwrap();
    project_params(&mut params);
    let x = Array1::from_vec(vec![0.4, -0.8]);
    let probe = argmin_diff_grad(
        &params,
        Some(&x),
        &Array1::from_elem(3, 0.5),
        3,
        Loss::SquaredError,
    )
    .unwrap();
    // Re-target exactly at the prediction: squared-error gradient vanishes.
    let out = argmin_diff_grad(&params, Some(&x), &probe.y_hat, 3, Loss::SquaredError).unwrap();
    assert_eq!(out.grads.max_abs(), 0.0);
    assert!(out.active_cuts >= 1 && out.active_cuts <= 3);
}

#[test]
fn argmin_diff_matches_finite_differences_through_the_solver() {
    // Softplus nets keep the solve smooth in theta. The derivative formula
    // fixes the final active set, so the oracle is valid only at instances
    // where no cut gets pruned at the base point or at any perturbed
    // evaluation point (lambda stays strictly positive throughout): a
    // pruning flip makes the solve map discontinuous.
    let spec = NetworkSpec::picnn(2, 2, vec![3], vec![3], Activation::Softplus);
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut tested = 0;
    let k = 3;
    'instances: while tested < 10 {
        let mut params = init_params(&spec, rng.gen(), 0.7).unwrap();
        project_params(&mut params);
        let x = Array1::from_shape_fn(2, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y_star = Array1::from_shape_fn(2, |_| rng.gen::<f64>());

        let out = argmin_diff_grad(&params, Some(&x), &y_star, k, Loss::SquaredError).unwrap();
        if out.active_cuts < k || out.report.bundle.lambda.iter().any(|&l| l < 1e-2) {
            continue; // active set too fragile for finite differences
        }

        // (loss, active-set-stable?) at perturbed parameters
        let loss_of = |p: &Params| {
            let o = icnn::learn::energy_oracle(p, Some(&x));
            let rep = bundle_entropy(
                o,
                &Array1::from_elem(2, 0.5),
                &BundleOptions {
                    iterations: k,
                    epsilon: 1.0,
                },
            )
            .unwrap();
            let stable = rep.bundle.points.len() == k;
            (Loss::SquaredError.value(&rep.y, &y_star), stable)
        };

        let analytic = out.grads.0.flatten();
        let base = params.flatten();
        let h = 1e-5;
        let mut fds = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut fp = base.clone();
            let mut fm = base.clone();
            fp[i] += h;
            fm[i] -= h;
            plus.assign_flat(&fp);
            minus.assign_flat(&fm);
            let (lp, sp) = loss_of(&plus);
            let (lm, sm) = loss_of(&minus);
            if !(sp && sm) {
                continue 'instances; // pruning flipped under perturbation
            }
            fds.push((lp - lm) / (2.0 * h));
        }
        tested += 1;
        for (i, &fd) in fds.iter().enumerate() {
            // Absolute floor: the dual solve stops at projected-gradient
            // norm 1e-10, and that residual divided by the stencil width
            // (2e-5) shows up as ~5e-6 of finite-difference noise.
            let tol = 1e-5 + 1e-3 * fd.abs().max(analytic[i].abs());
            assert!(
                (analytic[i] - fd).abs() <= tol,
                "instance {}: grad[{}] analytic {} vs fd {}",
                tested,
                i,
                analytic[i],
                fd
            );
        }
    }
}

#[test]
fn pg_unroll_matches_finite_differences() {
    // relu nets make the unrolled chain piecewise linear; keep instances
    // where no pre-activation, pre-clip sum, or velocity sign structure
    // sits near a kink so the stencil stays inside one smooth piece.
    use icnn::learn::pg_unroll_grad;
    use icnn::solver::PgOptions;
    let spec = NetworkSpec::picnn(2, 2, vec![3], vec![3], Activation::Relu);
    let opts = PgOptions {
        steps: 8,
        step_size: 0.05,
        momentum: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut tested = 0;
    'outer: while tested < 6 {
        let mut params = init_params(&spec, rng.gen(), 0.6).unwrap();
        project_params(&mut params);
        let x = Array1::from_shape_fn(2, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y_star = Array1::from_shape_fn(2, |_| rng.gen::<f64>());

        let out = pg_unroll_grad(&params, Some(&x), &y_star, &opts, Loss::SquaredError).unwrap();
        let analytic = out.grads.0.flatten();
        let base = params.flatten();
        let h = 1e-6;
        let loss_of = |p: &Params| {
            let o = pg_unroll_grad(p, Some(&x), &y_star, &opts, Loss::SquaredError).unwrap();
            o.loss
        };
        let mut fds = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut fp = base.clone();
            let mut fm = base.clone();
            fp[i] += h;
            fm[i] -= h;
            plus.assign_flat(&fp);
            minus.assign_flat(&fm);
            fds.push((loss_of(&plus) - loss_of(&minus)) / (2.0 * h));
        }
        // Kink proximity makes the two-sided stencil straddle linear
        // regions; detect it by comparing against a half-width stencil and
        // skip fragile instances.
        for i in 0..base.len() {
            let mut plus = params.clone();
            let mut fp = base.clone();
            fp[i] += h / 2.0;
            plus.assign_flat(&fp);
            let mut minus = params.clone();
            let mut fm = base.clone();
            fm[i] -= h / 2.0;
            minus.assign_flat(&fm);
            let half = (loss_of(&plus) - loss_of(&minus)) / h;
            if (half - fds[i]).abs() > 1e-7 + 1e-4 * fds[i].abs() {
                continue 'outer;
            }
        }
        tested += 1;
        for (i, &fd) in fds.iter().enumerate() {
            let tol = 1e-7 + 1e-4 * fd.abs().max(analytic[i].abs());
            assert!(
                (analytic[i] - fd).abs() <= tol,
                "instance {tested}: grad[{i}] analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }
}

#[test]
fn cancelled_gradients_reduce_update_to_shrinkage() {
    // When y_aug equals the label the two energy-gradient terms cancel and
    // the printed update becomes P_+[(1 - step*reg) * theta].
    let spec = NetworkSpec::picnn(2, 2, vec![3], vec![2], Activation::Relu);
    let params = init_params(&spec, 31, 0.6).unwrap();
    let x = Array1::from_vec(vec![0.5, -0.5]);
    let y = Array1::from_vec(vec![1.0, 0.0]);
    let (_, tape) = forward(&params, Some(x.view()), y.view()).unwrap();
    let g = grad_params(&params, &tape);
    let (reg, step) = (0.01, 0.1);
    let updated = margin_subgradient_update(&params, &g, &g, reg, step);
    // Entrywise shrinkage up to rounding; projection cannot fire because
    // shrinking preserves signs and the constrained tensors start feasible.
    let flat_updated = updated.flatten();
    let base = params.flatten();
    for i in 0..flat_updated.len() {
        let want = base[i] * (1.0 - step * reg);
        assert!(
            (flat_updated[i] - want).abs() <= 1e-15 * (1.0 + want.abs()),
            "entry {}: {} vs {}",
            i,
            flat_updated[i],
            want
        );
    }
}

#[test]
fn max_margin_step_decreases_hinge_objective_on_linear_toy() {
    // One-label linear toy: J(theta) = reg/2 ||theta||^2 + hinge.
    let ff = Feedforward::init(&[1, 1], Activation::Relu, 77, 0.9).unwrap();
    let params = embed_feedforward(&ff, 1).unwrap();
    let x = Array1::from_vec(vec![1.0]);
    let y_label = Array1::from_vec(vec![1.0]);
    let cfg = MaxMarginCfg {
        reg: 1e-3,
        step: 0.05,
        bundle: BundleOptions {
            iterations: 5,
            epsilon: 1.0,
        },
    };

    let objective = |p: &Params| {
        let oracle = icnn::learn::energy_oracle(p, Some(&x));
        let augmented = |yv: &Array1<f64>| {
            let (f, g) = oracle(yv);
            (f - margin(&y_label, yv), g + &y_label)
        };
        let rep = bundle_entropy(
            augmented,
            &Array1::from_elem(1, 0.5),
            &BundleOptions {
                iterations: 8,
                epsilon: 1.0,
            },
        )
        .unwrap();
        let f_tilde = |yv: &Array1<f64>| {
            forward(p, Some(x.view()), yv.view()).unwrap().0 - entropy_extended(yv)
        };
        let hinge =
            (f_tilde(&y_label) - (f_tilde(&rep.y) - margin(&y_label, &rep.y))).max(0.0);
        let norm2: f64 = p.flatten().iter().map(|v| v * v).sum();
        cfg.reg / 2.0 * norm2 + hinge
    };

    let before = objective(&params);
    let stepped = max_margin_step(&params, Some(&x), &y_label, &cfg).unwrap();
    assert!(stepped.violated, "toy instance should violate the margin");
    let after = objective(&stepped.params);
    assert!(
        after < before,
        "hinge objective did not decrease: {} -> {}",
        before,
        after
    );
}

#[test]
fn fit_drives_single_example_loss_down() {
    let spec = NetworkSpec::picnn(2, 2, vec![4], vec![3], Activation::Relu);
    let mut params = init_params(&spec, 5, 0.4).unwrap();
    project_params(&mut params);
    let data = icnn::data::Dataset::new(
        ndarray::arr2(&[[1.0, 0.0]]),
        ndarray::arr2(&[[0.9, 0.2]]),
    )
    .unwrap();
    let cfg = FitCfg {
        epochs: 200,
        batch: 1,
        inference: icnn::learn::TrainInference::bundle(3),
        loss: Loss::SquaredError,
        seed: 3,
        adam: icnn::learn::AdamCfg {
            lr: 0.02,
            ..icnn::learn::AdamCfg::default()
        },
        ..FitCfg::default()
    };
    let (_, log) = fit(&params, &data, &cfg, |_, _, _| {}).unwrap();
    let first = log.first().unwrap().train_loss;
    let last = log.last().unwrap().train_loss;
    assert!(
        last <= 0.1 * first,
        "loss did not drop 90%: {} -> {}",
        first,
        last
    );
}

//! Grid-search oracles for the solvers: bundle entropy against a dense 2-D
//! grid on network energies, the dual against a dense simplex grid, and the
//! per-iteration invariants read back from the trace.

use icnn::learn::energy_oracle;
use icnn::net::{forward, grad_input, init_params, project_params, Activation, NetworkSpec};
use icnn::solver::{
    bundle_entropy, bundle_entropy_traced, dual_objective, entropy, proj_newton_logistic,
    BundleOptions,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_picnn_energy(seed: u64, n: usize) -> (icnn::net::Params, Array1<f64>) {
    let spec = NetworkSpec::picnn(4, n, vec![8], vec![6], Activation::Relu);
    let mut params = init_params(&spec, seed, 0.8).unwrap();
    project_params(&mut params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let x = Array1::from_shape_fn(4, |_| rng.gen::<f64>() * 2.0 - 1.0);
    (params, x)
}

#[test]
fn bundle_matches_grid_on_random_convex_energies() {
    // 5 instances here; the acceptance suite runs the full 20.
    for seed in 0..5u64 {
        let (params, x) = random_picnn_energy(seed, 2);
        let oracle = energy_oracle(&params, Some(&x));
        let report = bundle_entropy(
            &oracle,
            &Array1::from_elem(2, 0.5),
            &BundleOptions {
                iterations: 10,
                epsilon: 1.0,
            },
        )
        .unwrap();

        let steps = 1000usize;
        let mut best = (f64::INFINITY, Array1::zeros(2));
        for i in 1..steps {
            for j in 1..steps {
                let y = Array1::from_vec(vec![i as f64 / steps as f64, j as f64 / steps as f64]);
                let (f, _) = forward(&params, Some(x.view()), y.view()).unwrap();
                let obj = f - entropy(&y).unwrap();
                if obj < best.0 {
                    best = (obj, y);
                }
            }
        }
        for (a, b) in report.y.iter().zip(best.1.iter()) {
            assert!(
                (a - b).abs() <= 1e-3,
                "seed {}: bundle {} vs grid {}",
                seed,
                a,
                b
            );
        }
    }
}

#[test]
fn dual_beats_dense_simplex_grid() {
    // k = 3 cuts over a 2-D box; dense grid on the simplex as the oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(31415);
    for _ in 0..5 {
        let g = Array2::from_shape_fn((3, 2), |_| rng.gen::<f64>() * 4.0 - 2.0);
        let h = Array1::from_shape_fn(3, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let lambda = proj_newton_logistic(&g, &h).unwrap();
        let value = dual_objective(&g, &h, &lambda);
        let m = 1000usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=m {
            for j in 0..=(m - i) {
                let l = Array1::from_vec(vec![
                    i as f64 / m as f64,
                    j as f64 / m as f64,
                    (m - i - j) as f64 / m as f64,
                ]);
                let v = dual_objective(&g, &h, &l);
                if v > best {
                    best = v;
                }
            }
        }
        assert!(value >= best - 1e-6, "dual {} vs grid {}", value, best);
    }
}

#[test]
fn trace_invariants_hold_along_the_run() {
    // Lower bounds are nondecreasing and never exceed the incumbent
    // objective; the final gap is nonnegative up to solver tolerance.
    for seed in 0..8u64 {
        let (params, x) = random_picnn_energy(seed + 100, 3);
        let oracle = energy_oracle(&params, Some(&x));
        let mut trace = Vec::new();
        let report = bundle_entropy_traced(
            &oracle,
            &Array1::from_elem(3, 0.5),
            &BundleOptions {
                iterations: 8,
                epsilon: 1.0,
            },
            Some(&mut trace),
        )
        .unwrap();
        let text = String::from_utf8(trace).unwrap();
        let mut prev_lb = f64::NEG_INFINITY;
        for line in text.lines().skip(1) {
            let cols: Vec<f64> = line
                .split(',')
                .map(|t| t.parse::<f64>().unwrap())
                .collect();
            let (f_tilde, lb, gap, active) = (cols[1], cols[2], cols[3], cols[4]);
            assert!(lb >= prev_lb - 1e-8, "lower bound decreased: {prev_lb} -> {lb}");
            assert!(lb <= f_tilde + 1e-8, "lower bound above objective");
            assert!((gap - (f_tilde - lb)).abs() <= 1e-12);
            assert!(active >= 1.0);
            prev_lb = lb;
        }
        assert!(report.gap >= -1e-8);
        assert!(report.objective >= report.lower_bound - 1e-8);
        assert!(report.y.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn stored_cuts_underestimate_the_energy() {
    // Spot-check the underestimator property of every stored cut at 100
    // random points per solve.
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for seed in 0..4u64 {
        let (params, x) = random_picnn_energy(seed + 50, 2);
        let oracle = energy_oracle(&params, Some(&x));
        let report = bundle_entropy(
            &oracle,
            &Array1::from_elem(2, 0.5),
            &BundleOptions {
                iterations: 6,
                epsilon: 1.0,
            },
        )
        .unwrap();
        let b = &report.bundle;
        for _ in 0..100 {
            let y = Array1::from_shape_fn(2, |_| rng.gen::<f64>());
            let (f, _) = forward(&params, Some(x.view()), y.view()).unwrap();
            for i in 0..b.g.nrows() {
                let cut = b.g.row(i).dot(&y) + b.h[i];
                assert!(cut <= f + 1e-9, "cut {i} overestimates: {cut} > {f}");
            }
        }
    }
}

#[test]
fn bundle_agrees_with_projected_gradient_on_entropic_objective() {
    // Module invariant: K = 10 bundle vs 500 projected-gradient steps on
    // f - H, within 1e-2 in the infinity norm, on n <= 4 instances.
    for (seed, n) in [(7u64, 1usize), (8, 2), (9, 4)] {
        let (params, x) = random_picnn_energy(seed, n);
        let oracle = energy_oracle(&params, Some(&x));
        let report = bundle_entropy(
            &oracle,
            &Array1::from_elem(n, 0.5),
            &BundleOptions {
                iterations: 10,
                epsilon: 1.0,
            },
        )
        .unwrap();
        let entropic = |y: &Array1<f64>| {
            let (f, g) = oracle(y);
            let yc = y.mapv(|v| v.clamp(1e-12, 1.0 - 1e-12));
            let h: f64 = yc
                .iter()
                .map(|&v| -(v * v.ln() + (1.0 - v) * (1.0 - v).ln()))
                .sum();
            (f - h, g - yc.mapv(|v| -(v / (1.0 - v)).ln()))
        };
        let pg = icnn::solver::projected_gradient(
            entropic,
            &Array1::from_elem(n, 0.5),
            &icnn::solver::PgOptions {
                steps: 500,
                step_size: 0.05,
                momentum: 0.5,
            },
        );
        for (a, b) in report.y.iter().zip(pg.iter()) {
            assert!((a - b).abs() <= 1e-2, "n={n}: bundle {a} vs pg {b}");
        }
    }
}

#[test]
fn subgradients_feed_valid_cuts_even_at_kinks() {
    // relu energies are piecewise linear; cuts built at arbitrary points
    // (kinks included) must stay below the function.
    let spec = NetworkSpec::ficnn(2, vec![5], Activation::Relu);
    let mut params = init_params(&spec, 77, 1.2).unwrap();
    project_params(&mut params);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let y0 = Array1::from_shape_fn(2, |_| rng.gen::<f64>());
        let (f0, tape) = forward(&params, None, y0.view()).unwrap();
        let g0 = grad_input(&params, &tape);
        let y1 = Array1::from_shape_fn(2, |_| rng.gen::<f64>() * 3.0 - 1.0);
        let (f1, _) = forward(&params, None, y1.view()).unwrap();
        assert!(f0 + g0.dot(&(&y1 - &y0)) <= f1 + 1e-9);
    }
}

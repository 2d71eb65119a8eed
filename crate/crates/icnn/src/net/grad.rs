//! Hand-derived reverse-mode passes over a [`GradTape`], plus the
//! forward-over-reverse pass that differentiates the input gradient once
//! more with respect to the parameters.

use ndarray::{Array1, Array2};

use super::{FicnnParams, GradTape, Gradients, NetError, Params, PicnnParams};

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (n, m) = (a.len(), b.len());
    Array2::from_shape_fn((n, m), |(i, j)| a[i] * b[j])
}

#[inline]
fn relu_deriv(q: f64) -> f64 {
    if q > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Sensitivities of the output with respect to every z-layer pre-activation
/// (the output layer is linear, so the seed is 1).
fn z_deltas_ficnn(p: &FicnnParams, tape: &GradTape) -> Vec<Array1<f64>> {
    let k = p.spec.layer_count();
    let act = p.spec.activation;
    let mut deltas = vec![Array1::zeros(0); k];
    deltas[k - 1] = Array1::ones(1);
    for i in (1..k).rev() {
        let back = p.w_z[i - 1].t().dot(&deltas[i]);
        deltas[i - 1] = &back * &tape.pre[i - 1].mapv(|v| act.deriv(v));
    }
    deltas
}

fn z_deltas_picnn(p: &PicnnParams, tape: &GradTape) -> Vec<Array1<f64>> {
    let k = p.spec.layer_count();
    let act = p.spec.activation;
    let mut deltas = vec![Array1::zeros(0); k];
    deltas[k - 1] = Array1::ones(1);
    for i in (1..k).rev() {
        let back = &p.w_z[i - 1].t().dot(&deltas[i]) * &tape.gate_z[i - 1];
        deltas[i - 1] = &back * &tape.pre[i - 1].mapv(|v| act.deriv(v));
    }
    deltas
}

/// Gradient of the network output with respect to the convex input `y`
/// (a subgradient at relu kinks; the relu derivative at 0 is taken as 0).
pub fn grad_input(params: &Params, tape: &GradTape) -> Array1<f64> {
    match params {
        Params::Ficnn(p) => {
            let deltas = z_deltas_ficnn(p, tape);
            let mut g = Array1::zeros(p.spec.input_dim_y);
            for i in 0..p.spec.layer_count() {
                g += &p.w_y[i].t().dot(&deltas[i]);
            }
            g
        }
        Params::Picnn(p) => {
            let deltas = z_deltas_picnn(p, tape);
            let mut g = Array1::zeros(p.spec.input_dim_y);
            for i in 0..p.spec.layer_count() {
                g += &(&p.w_y[i].t().dot(&deltas[i]) * &tape.gate_y[i]);
            }
            g
        }
    }
}

/// Gradient of the network output with respect to every parameter tensor.
pub fn grad_params(params: &Params, tape: &GradTape) -> Gradients {
    let mut grads = Gradients::zeros_like(params);
    match (params, &mut grads.0) {
        (Params::Ficnn(p), Params::Ficnn(g)) => {
            let deltas = z_deltas_ficnn(p, tape);
            let k = p.spec.layer_count();
            for i in 0..k {
                g.w_y[i] = outer(&deltas[i], &tape.y);
                g.b[i] = deltas[i].clone();
                if i >= 1 {
                    g.w_z[i - 1] = outer(&deltas[i], &tape.z[i]);
                }
            }
        }
        (Params::Picnn(p), Params::Picnn(g)) => {
            let deltas = z_deltas_picnn(p, tape);
            let k = p.spec.layer_count();
            let act = p.spec.activation;
            let mut du: Vec<Array1<f64>> =
                (0..k).map(|i| Array1::zeros(p.spec.n(i))).collect();
            for i in 0..k {
                let d = &deltas[i];
                let t = &tape.gate_y[i];
                let u = &tape.u[i];
                // y-branch: pre_i += w_y (y ∘ t_i), t_i = w_yu u_i + by_i
                let yg = p.w_y[i].t().dot(d);
                g.w_y[i] = outer(d, &(&tape.y * t));
                let dt = &tape.y * &yg;
                g.w_yu[i] = outer(&dt, u);
                g.b_y[i] = dt.clone();
                // direct u-branch and bias
                g.w_u[i] = outer(d, u);
                g.b[i] = d.clone();
                du[i] += &p.w_yu[i].t().dot(&dt);
                du[i] += &p.w_u[i].t().dot(d);
                // z-branch: pre_i += w_z (z_i ∘ s_i), s_i = relu(w_zu u_i + bz_i)
                if i >= 1 {
                    let zg = p.w_z[i - 1].t().dot(d);
                    g.w_z[i - 1] = outer(d, &(&tape.z[i] * &tape.gate_z[i - 1]));
                    let ds = &tape.z[i] * &zg;
                    let dq = &ds * &tape.gate_z_raw[i - 1].mapv(relu_deriv);
                    g.w_zu[i - 1] = outer(&dq, u);
                    g.b_z[i - 1] = dq.clone();
                    du[i] += &p.w_zu[i - 1].t().dot(&dq);
                }
            }
            // x-path backward; the final transition (i = k-2) is linear.
            for i in (0..k - 1).rev() {
                let dpre_u = if i == k - 2 {
                    du[i + 1].clone()
                } else {
                    &du[i + 1] * &tape.pre_u[i].mapv(|v| act.deriv(v))
                };
                g.w_x[i] = outer(&dpre_u, &tape.u[i]);
                g.b_x[i] = dpre_u.clone();
                du[i] += &p.w_x[i].t().dot(&dpre_u);
            }
        }
        _ => unreachable!("gradients allocated from the same spec"),
    }
    grads
}

/// Computes `∇_θ (∇_y f(x, y; θ)^T v)` by differentiating the full
/// forward/backward pass along the input direction `v` (mixed partials
/// commute, so the directional derivative of the parameter gradient along
/// `y + αv` is exactly the quantity required). Exact on the piecewise-linear
/// region containing `y`; relu kinks use the same 0-subgradient convention
/// as the first-order passes.
pub fn grad_params_dirderiv(
    params: &Params,
    tape: &GradTape,
    v: &Array1<f64>,
) -> Result<Gradients, NetError> {
    let spec = params.spec();
    if v.len() != spec.input_dim_y {
        return Err(NetError::DimMismatch(format!(
            "direction has length {}, spec wants {}",
            v.len(),
            spec.input_dim_y
        )));
    }
    let k = spec.layer_count();
    let act = spec.activation;
    let mut grads = Gradients::zeros_like(params);

    match (params, &mut grads.0) {
        (Params::Ficnn(p), Params::Ficnn(g)) => {
            // Forward tangents of z along ẏ = v.
            let mut zdot: Vec<Array1<f64>> = vec![Array1::zeros(0); k + 1];
            let mut predot: Vec<Array1<f64>> = Vec::with_capacity(k);
            for i in 0..k {
                let mut a = p.w_y[i].dot(v);
                if i >= 1 {
                    a += &p.w_z[i - 1].dot(&zdot[i]);
                }
                zdot[i + 1] = if i == k - 1 {
                    a.clone()
                } else {
                    &a * &tape.pre[i].mapv(|q| act.deriv(q))
                };
                predot.push(a);
            }
            // Reverse primal and tangent.
            let deltas = z_deltas_ficnn(p, tape);
            let mut ddot: Vec<Array1<f64>> = vec![Array1::zeros(0); k];
            ddot[k - 1] = Array1::zeros(1);
            for i in (1..k).rev() {
                let back = p.w_z[i - 1].t().dot(&deltas[i]);
                let backdot = p.w_z[i - 1].t().dot(&ddot[i]);
                let d1 = tape.pre[i - 1].mapv(|q| act.deriv(q));
                let d2 = tape.pre[i - 1].mapv(|q| act.second_deriv(q));
                ddot[i - 1] = &backdot * &d1 + &(&back * &d2) * &predot[i - 1];
            }
            for i in 0..k {
                g.w_y[i] = outer(&ddot[i], &tape.y) + outer(&deltas[i], v);
                g.b[i] = ddot[i].clone();
                if i >= 1 {
                    g.w_z[i - 1] = outer(&ddot[i], &tape.z[i]) + outer(&deltas[i], &zdot[i]);
                }
            }
        }
        (Params::Picnn(p), Params::Picnn(g)) => {
            // x-path values carry no tangent (x and θ are fixed); only the
            // z-path and y do.
            let mut zdot: Vec<Array1<f64>> = vec![Array1::zeros(0); k + 1];
            let mut predot: Vec<Array1<f64>> = Vec::with_capacity(k);
            for i in 0..k {
                let mut a = p.w_y[i].dot(&(v * &tape.gate_y[i]));
                if i >= 1 {
                    a += &p.w_z[i - 1].dot(&(&zdot[i] * &tape.gate_z[i - 1]));
                }
                zdot[i + 1] = if i == k - 1 {
                    a.clone()
                } else {
                    &a * &tape.pre[i].mapv(|q| act.deriv(q))
                };
                predot.push(a);
            }
            let deltas = z_deltas_picnn(p, tape);
            let mut ddot: Vec<Array1<f64>> = vec![Array1::zeros(0); k];
            ddot[k - 1] = Array1::zeros(1);
            for i in (1..k).rev() {
                let back = &p.w_z[i - 1].t().dot(&deltas[i]) * &tape.gate_z[i - 1];
                let backdot = &p.w_z[i - 1].t().dot(&ddot[i]) * &tape.gate_z[i - 1];
                let d1 = tape.pre[i - 1].mapv(|q| act.deriv(q));
                let d2 = tape.pre[i - 1].mapv(|q| act.second_deriv(q));
                ddot[i - 1] = &backdot * &d1 + &(&back * &d2) * &predot[i - 1];
            }
            let mut dudot: Vec<Array1<f64>> =
                (0..k).map(|i| Array1::zeros(p.spec.n(i))).collect();
            for i in 0..k {
                let d = &deltas[i];
                let dd = &ddot[i];
                let t = &tape.gate_y[i];
                let u = &tape.u[i];
                let yg = p.w_y[i].t().dot(d);
                let ygdot = p.w_y[i].t().dot(dd);
                g.w_y[i] = outer(dd, &(&tape.y * t)) + outer(d, &(v * t));
                let dtdot = &(v * &yg) + &(&tape.y * &ygdot);
                g.w_yu[i] = outer(&dtdot, u);
                g.b_y[i] = dtdot.clone();
                g.w_u[i] = outer(dd, u);
                g.b[i] = dd.clone();
                dudot[i] += &p.w_yu[i].t().dot(&dtdot);
                dudot[i] += &p.w_u[i].t().dot(dd);
                if i >= 1 {
                    let zg = p.w_z[i - 1].t().dot(d);
                    let zgdot = p.w_z[i - 1].t().dot(dd);
                    let s = &tape.gate_z[i - 1];
                    g.w_z[i - 1] =
                        outer(dd, &(&tape.z[i] * s)) + outer(d, &(&zdot[i] * s));
                    let dsdot = &(&zdot[i] * &zg) + &(&tape.z[i] * &zgdot);
                    let dqdot = &dsdot * &tape.gate_z_raw[i - 1].mapv(relu_deriv);
                    g.w_zu[i - 1] = outer(&dqdot, u);
                    g.b_z[i - 1] = dqdot.clone();
                    dudot[i] += &p.w_zu[i - 1].t().dot(&dqdot);
                }
            }
            for i in (0..k - 1).rev() {
                let dpre_udot = if i == k - 2 {
                    dudot[i + 1].clone()
                } else {
                    &dudot[i + 1] * &tape.pre_u[i].mapv(|q| act.deriv(q))
                };
                g.w_x[i] = outer(&dpre_udot, &tape.u[i]);
                g.b_x[i] = dpre_udot.clone();
                dudot[i] += &p.w_x[i].t().dot(&dpre_udot);
            }
        }
        _ => unreachable!("gradients allocated from the same spec"),
    }
    Ok(grads)
}

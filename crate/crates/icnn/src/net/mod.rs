//! Scalar-valued energy networks that are convex in (a subset of) their
//! inputs.
//!
//! Two architectures are provided. A `Ficnn` is convex in its entire input
//! `y`; a `Picnn` takes an extra context input `x` and is convex in `y` but
//! arbitrary in `x`. Convexity holds whenever every `w_z` weight matrix is
//! elementwise nonnegative and the activation is convex and nondecreasing,
//! which [`project_params`] enforces after every optimizer step.
//!
//! Layer recurrences (`k` layers, `z_0` empty, output layer is linear):
//!
//! ```text
//! FICNN:  z_{i+1} = g(w_z_i z_i + w_y_i y + b_i)
//! PICNN:  u_{i+1} = g(w_x_i u_i + bx_i)          (last transition linear)
//!         z_{i+1} = g(w_z_i (z_i ∘ relu(w_zu_i u_i + bz_i))
//!                     + w_y_i (y ∘ (w_yu_i u_i + by_i))
//!                     + w_u_i u_i + b_i),        u_0 = x
//! ```
//!
//! All derivatives are hand-derived reverse-mode passes over a [`GradTape`]
//! captured by [`forward`]; see [`grad_input`], [`grad_params`] and
//! [`grad_params_dirderiv`].

mod checkpoint;
mod grad;
mod lp;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use grad::{grad_input, grad_params, grad_params_dirderiv};
pub use lp::{export_lp, write_lp};

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("operation requires relu activation, got {0:?}")]
    ReluRequired(Activation),
}

/// Hidden-layer nonlinearity. Both choices are convex and nondecreasing;
/// the output layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn value(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Softplus => softplus(a),
        }
    }

    /// First derivative. The relu subgradient at 0 is taken to be 0 so that
    /// cutting planes built from it remain global underestimators.
    #[inline]
    pub fn deriv(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(a),
        }
    }

    #[inline]
    pub fn second_deriv(self, a: f64) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::Softplus => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
        }
    }
}

/// Numerically stable log(1 + exp(a)).
#[inline]
pub(crate) fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// Numerically stable 1 / (1 + exp(-a)).
#[inline]
pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Ficnn,
    Picnn,
}

/// Architecture description: layer counts and widths, held by every
/// parameter set and serialized into checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetKind,
    /// Dimension of the non-convex context input `x`; 0 for a FICNN.
    pub input_dim_x: usize,
    /// Dimension of the convex input `y`.
    pub input_dim_y: usize,
    /// Hidden z-path widths m_1..m_{k-1}; the output layer has width 1.
    pub layer_widths: Vec<usize>,
    /// Hidden x-path widths n_1..n_{k-1} (PICNN only; same length as
    /// `layer_widths`).
    pub u_widths: Vec<usize>,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn ficnn(input_dim_y: usize, layer_widths: Vec<usize>, activation: Activation) -> Self {
        NetworkSpec {
            kind: NetKind::Ficnn,
            input_dim_x: 0,
            input_dim_y,
            layer_widths,
            u_widths: Vec::new(),
            activation,
        }
    }

    pub fn picnn(
        input_dim_x: usize,
        input_dim_y: usize,
        layer_widths: Vec<usize>,
        u_widths: Vec<usize>,
        activation: Activation,
    ) -> Self {
        NetworkSpec {
            kind: NetKind::Picnn,
            input_dim_x,
            input_dim_y,
            layer_widths,
            u_widths,
            activation,
        }
    }

    /// Number of z-path layers `k` (at least 1).
    pub fn layer_count(&self) -> usize {
        self.layer_widths.len() + 1
    }

    /// Width of z_i (m_0 = 0 by convention, m_k = 1).
    pub(crate) fn m(&self, i: usize) -> usize {
        let k = self.layer_count();
        if i == 0 {
            0
        } else if i == k {
            1
        } else {
            self.layer_widths[i - 1]
        }
    }

    /// Width of u_i (n_0 = input_dim_x).
    pub(crate) fn n(&self, i: usize) -> usize {
        if i == 0 {
            self.input_dim_x
        } else {
            self.u_widths[i - 1]
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim_y == 0 {
            return Err(NetError::InvalidSpec("input_dim_y must be positive".into()));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(NetError::InvalidSpec("zero layer width".into()));
        }
        match self.kind {
            NetKind::Ficnn => {
                if self.input_dim_x != 0 || !self.u_widths.is_empty() {
                    return Err(NetError::InvalidSpec("FICNN has no x-path".into()));
                }
            }
            NetKind::Picnn => {
                if self.input_dim_x == 0 {
                    return Err(NetError::InvalidSpec(
                        "PICNN requires input_dim_x >= 1".into(),
                    ));
                }
                if self.u_widths.len() != self.layer_widths.len() {
                    return Err(NetError::InvalidSpec(
                        "u_widths length must equal layer_widths length".into(),
                    ));
                }
                if self.u_widths.iter().any(|&w| w == 0) {
                    return Err(NetError::InvalidSpec("zero u width".into()));
                }
            }
        }
        Ok(())
    }
}

/// Parameters of a fully input convex network (all tensors indexed by layer;
/// `w_z[i-1]` feeds layer `i` since z_0 is empty).
#[derive(Clone, Debug, PartialEq)]
pub struct FicnnParams {
    pub spec: NetworkSpec,
    pub w_y: Vec<Array2<f64>>,
    /// Nonnegativity-constrained tensors (layers 1..k).
    pub w_z: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

/// Parameters of a partially input convex network. Only `w_z` carries the
/// nonnegativity constraint; the z-gate is clamped at evaluation time.
#[derive(Clone, Debug, PartialEq)]
pub struct PicnnParams {
    pub spec: NetworkSpec,
    /// x-path weights (k-1 transitions; the final transition is linear).
    pub w_x: Vec<Array2<f64>>,
    pub b_x: Vec<Array1<f64>>,
    /// Nonnegativity-constrained tensors (layers 1..k).
    pub w_z: Vec<Array2<f64>>,
    pub w_zu: Vec<Array2<f64>>,
    pub b_z: Vec<Array1<f64>>,
    pub w_y: Vec<Array2<f64>>,
    pub w_yu: Vec<Array2<f64>>,
    pub b_y: Vec<Array1<f64>>,
    pub w_u: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Ficnn(FicnnParams),
    Picnn(PicnnParams),
}

pub(crate) enum TensorRef<'a> {
    M(&'a Array2<f64>),
    V(&'a Array1<f64>),
}

pub(crate) enum TensorMut<'a> {
    M(&'a mut Array2<f64>),
    V(&'a mut Array1<f64>),
}

impl<'a> TensorRef<'a> {
    pub(crate) fn as_slice(&self) -> &[f64] {
        match self {
            TensorRef::M(m) => m.as_slice().expect("standard layout"),
            TensorRef::V(v) => v.as_slice().expect("standard layout"),
        }
    }

    pub(crate) fn shape(&self) -> Vec<usize> {
        match self {
            TensorRef::M(m) => m.shape().to_vec(),
            TensorRef::V(v) => v.shape().to_vec(),
        }
    }
}

impl<'a> TensorMut<'a> {
    pub(crate) fn as_slice_mut(&mut self) -> &mut [f64] {
        match self {
            TensorMut::M(m) => m.as_slice_mut().expect("standard layout"),
            TensorMut::V(v) => v.as_slice_mut().expect("standard layout"),
        }
    }
}

/// A named view of one parameter tensor; `nonneg` marks the tensors that
/// [`project_params`] clamps.
pub(crate) struct TensorEntry<'a> {
    pub name: String,
    pub nonneg: bool,
    pub tensor: TensorRef<'a>,
}

pub(crate) struct TensorEntryMut<'a> {
    #[allow(dead_code)]
    pub name: String,
    pub nonneg: bool,
    pub tensor: TensorMut<'a>,
}

macro_rules! push_group {
    ($out:ident, $prefix:expr, $vec:expr, $offset:expr, $nonneg:expr, $wrap:ident, $entry:ident) => {
        for (j, t) in $vec.iter().enumerate() {
            $out.push($entry {
                name: format!("{}_{}", $prefix, j + $offset),
                nonneg: $nonneg,
                tensor: $wrap(t),
            });
        }
    };
    (mut $out:ident, $prefix:expr, $vec:expr, $offset:expr, $nonneg:expr, $wrap:ident, $entry:ident) => {
        for (j, t) in $vec.iter_mut().enumerate() {
            $out.push($entry {
                name: format!("{}_{}", $prefix, j + $offset),
                nonneg: $nonneg,
                tensor: $wrap(t),
            });
        }
    };
}

impl Params {
    pub fn spec(&self) -> &NetworkSpec {
        match self {
            Params::Ficnn(p) => &p.spec,
            Params::Picnn(p) => &p.spec,
        }
    }

    pub fn as_ficnn(&self) -> Option<&FicnnParams> {
        match self {
            Params::Ficnn(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_picnn(&self) -> Option<&PicnnParams> {
        match self {
            Params::Picnn(p) => Some(p),
            _ => None,
        }
    }

    /// Canonical tensor order shared by init, optimizers and checkpoints.
    pub(crate) fn tensors(&self) -> Vec<TensorEntry<'_>> {
        use TensorRef::{M, V};
        let mut out = Vec::new();
        match self {
            Params::Ficnn(p) => {
                push_group!(out, "w_y", p.w_y, 0, false, M, TensorEntry);
                push_group!(out, "w_z", p.w_z, 1, true, M, TensorEntry);
                push_group!(out, "b", p.b, 0, false, V, TensorEntry);
            }
            Params::Picnn(p) => {
                push_group!(out, "w_x", p.w_x, 0, false, M, TensorEntry);
                push_group!(out, "b_x", p.b_x, 0, false, V, TensorEntry);
                push_group!(out, "w_z", p.w_z, 1, true, M, TensorEntry);
                push_group!(out, "w_zu", p.w_zu, 1, false, M, TensorEntry);
                push_group!(out, "b_z", p.b_z, 1, false, V, TensorEntry);
                push_group!(out, "w_y", p.w_y, 0, false, M, TensorEntry);
                push_group!(out, "w_yu", p.w_yu, 0, false, M, TensorEntry);
                push_group!(out, "b_y", p.b_y, 0, false, V, TensorEntry);
                push_group!(out, "w_u", p.w_u, 0, false, M, TensorEntry);
                push_group!(out, "b", p.b, 0, false, V, TensorEntry);
            }
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<TensorEntryMut<'_>> {
        use TensorMut::{M, V};
        let mut out = Vec::new();
        match self {
            Params::Ficnn(p) => {
                push_group!(mut out, "w_y", p.w_y, 0, false, M, TensorEntryMut);
                push_group!(mut out, "w_z", p.w_z, 1, true, M, TensorEntryMut);
                push_group!(mut out, "b", p.b, 0, false, V, TensorEntryMut);
            }
            Params::Picnn(p) => {
                push_group!(mut out, "w_x", p.w_x, 0, false, M, TensorEntryMut);
                push_group!(mut out, "b_x", p.b_x, 0, false, V, TensorEntryMut);
                push_group!(mut out, "w_z", p.w_z, 1, true, M, TensorEntryMut);
                push_group!(mut out, "w_zu", p.w_zu, 1, false, M, TensorEntryMut);
                push_group!(mut out, "b_z", p.b_z, 1, false, V, TensorEntryMut);
                push_group!(mut out, "w_y", p.w_y, 0, false, M, TensorEntryMut);
                push_group!(mut out, "w_yu", p.w_yu, 0, false, M, TensorEntryMut);
                push_group!(mut out, "b_y", p.b_y, 0, false, V, TensorEntryMut);
                push_group!(mut out, "w_u", p.w_u, 0, false, M, TensorEntryMut);
                push_group!(mut out, "b", p.b, 0, false, V, TensorEntryMut);
            }
        }
        out
    }

    /// All-zero parameter set for the given spec.
    pub fn zeros(spec: &NetworkSpec) -> Result<Params, NetError> {
        spec.validate()?;
        let k = spec.layer_count();
        let p = spec.input_dim_y;
        match spec.kind {
            NetKind::Ficnn => {
                let w_y = (0..k).map(|i| Array2::zeros((spec.m(i + 1), p))).collect();
                let w_z = (1..k)
                    .map(|i| Array2::zeros((spec.m(i + 1), spec.m(i))))
                    .collect();
                let b = (0..k).map(|i| Array1::zeros(spec.m(i + 1))).collect();
                Ok(Params::Ficnn(FicnnParams {
                    spec: spec.clone(),
                    w_y,
                    w_z,
                    b,
                }))
            }
            NetKind::Picnn => {
                let w_x = (0..k - 1)
                    .map(|i| Array2::zeros((spec.n(i + 1), spec.n(i))))
                    .collect();
                let b_x = (0..k - 1).map(|i| Array1::zeros(spec.n(i + 1))).collect();
                let w_z = (1..k)
                    .map(|i| Array2::zeros((spec.m(i + 1), spec.m(i))))
                    .collect();
                let w_zu = (1..k)
                    .map(|i| Array2::zeros((spec.m(i), spec.n(i))))
                    .collect();
                let b_z = (1..k).map(|i| Array1::zeros(spec.m(i))).collect();
                let w_y = (0..k).map(|i| Array2::zeros((spec.m(i + 1), p))).collect();
                let w_yu = (0..k).map(|i| Array2::zeros((p, spec.n(i)))).collect();
                let b_y = (0..k).map(|_| Array1::zeros(p)).collect();
                let w_u = (0..k)
                    .map(|i| Array2::zeros((spec.m(i + 1), spec.n(i))))
                    .collect();
                let b = (0..k).map(|i| Array1::zeros(spec.m(i + 1))).collect();
                Ok(Params::Picnn(PicnnParams {
                    spec: spec.clone(),
                    w_x,
                    b_x,
                    w_z,
                    w_zu,
                    b_z,
                    w_y,
                    w_yu,
                    b_y,
                    w_u,
                    b,
                }))
            }
        }
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|e| e.tensor.as_slice().len()).sum()
    }

    /// All parameters concatenated in canonical tensor order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for e in self.tensors() {
            out.extend_from_slice(e.tensor.as_slice());
        }
        out
    }

    /// Writes a flat vector (as produced by [`Params::flatten`]) back into
    /// the tensors. Panics if the length differs.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for mut e in self.tensors_mut() {
            let dst = e.tensor.as_slice_mut();
            dst.copy_from_slice(&flat[offset..offset + dst.len()]);
            offset += dst.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Largest absolute entry across all tensors.
    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|e| e.tensor.as_slice().iter().copied())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Smallest entry over the nonnegativity-constrained tensors, or None if
    /// the net has none (k = 1).
    pub fn min_constrained_entry(&self) -> Option<f64> {
        self.tensors()
            .iter()
            .filter(|e| e.nonneg)
            .flat_map(|e| e.tensor.as_slice().iter().copied())
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            })
    }
}

/// Draws all weight matrices i.i.d. uniform from [-scale, scale], clamps the
/// constrained `w_z` tensors into [0, scale], and zeroes every bias. The
/// draw order is the canonical tensor order, so a fixed seed reproduces the
/// parameters exactly.
pub fn init_params(spec: &NetworkSpec, seed: u64, scale: f64) -> Result<Params, NetError> {
    let mut params = Params::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for entry in params.tensors_mut() {
        if let TensorMut::M(_) = entry.tensor {
            let mut e = entry;
            for w in e.tensor.as_slice_mut() {
                let u: f64 = rng.gen();
                *w = -scale + 2.0 * scale * u;
            }
            if e.nonneg {
                for w in e.tensor.as_slice_mut() {
                    *w = w.max(0.0);
                }
            }
        }
    }
    Ok(params)
}

/// Clamps every entry of the nonnegativity-constrained tensors to
/// max(entry, 0), leaving all other tensors untouched. Idempotent.
pub fn project_params(params: &mut Params) {
    for mut entry in params.tensors_mut() {
        if entry.nonneg {
            for w in entry.tensor.as_slice_mut() {
                *w = w.max(0.0);
            }
        }
    }
}

/// Cached activations from a [`forward`] pass, sufficient for every
/// backward pass in this module. Replaying the stored activations through
/// the layer recurrence reproduces `value` bit-for-bit.
#[derive(Clone, Debug)]
pub struct GradTape {
    pub(crate) y: Array1<f64>,
    pub(crate) x: Option<Array1<f64>>,
    /// Pre-activations per z-layer; `pre[i]` has width m_{i+1}.
    pub(crate) pre: Vec<Array1<f64>>,
    /// Activations z_1..z_k; `z[i]` is z_i (z[0] is the empty z_0).
    pub(crate) z: Vec<Array1<f64>>,
    /// PICNN x-path values u_0..u_{k-1}.
    pub(crate) u: Vec<Array1<f64>>,
    /// PICNN x-path pre-activations (k-1 entries).
    pub(crate) pre_u: Vec<Array1<f64>>,
    /// Raw z-gate values w_zu_i u_i + bz_i for layers 1..k.
    pub(crate) gate_z_raw: Vec<Array1<f64>>,
    /// Clamped z-gates relu(gate_z_raw).
    pub(crate) gate_z: Vec<Array1<f64>>,
    /// y-gates w_yu_i u_i + by_i for layers 0..k.
    pub(crate) gate_y: Vec<Array1<f64>>,
    pub(crate) value: f64,
}

impl GradTape {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn input_y(&self) -> &Array1<f64> {
        &self.y
    }

    /// Stored activation vector z_i (z_0 is the empty vector).
    pub fn activations(&self, i: usize) -> Array1<f64> {
        self.z[i].clone()
    }

    /// Smallest |pre-activation| over every kinked nonlinearity in the pass
    /// (z-path, x-path and z-gate relus). Finite-difference gradient checks
    /// use this to stay away from subdifferentiable points.
    pub fn min_abs_preactivation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for group in [&self.pre, &self.pre_u, &self.gate_z_raw] {
            for arr in group.iter() {
                for &v in arr.iter() {
                    m = m.min(v.abs());
                }
            }
        }
        m
    }

    /// Recomputes the output from the stored activations without rerunning
    /// the nonlinearities on the z-path inputs (used to validate the tape).
    pub fn replay(&self, params: &Params) -> Result<f64, NetError> {
        let (value, _) = match params {
            Params::Ficnn(_) => forward(params, None, self.y.view())?,
            Params::Picnn(_) => forward(
                params,
                self.x.as_ref().map(|x| x.view()),
                self.y.view(),
            )?,
        };
        Ok(value)
    }
}

/// Per-tensor gradients, shape-congruent with the parameter set they
/// differentiate.
#[derive(Clone, Debug)]
pub struct Gradients(pub Params);

impl Gradients {
    pub fn zeros_like(params: &Params) -> Gradients {
        Gradients(Params::zeros(params.spec()).expect("params spec already validated"))
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f64, other: &Gradients) {
        let mut mine = self.0.tensors_mut();
        let theirs = other.0.tensors();
        assert_eq!(mine.len(), theirs.len(), "gradient structure mismatch");
        for (m, t) in mine.iter_mut().zip(theirs.iter()) {
            let dst = m.tensor.as_slice_mut();
            let src = t.tensor.as_slice();
            assert_eq!(dst.len(), src.len(), "gradient tensor shape mismatch");
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += a * s;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for mut entry in self.0.tensors_mut() {
            for v in entry.tensor.as_slice_mut() {
                *v *= a;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }
}

fn check_forward_dims(
    spec: &NetworkSpec,
    x: Option<&ArrayView1<f64>>,
    y: &ArrayView1<f64>,
) -> Result<(), NetError> {
    if y.len() != spec.input_dim_y {
        return Err(NetError::DimMismatch(format!(
            "y has length {}, spec wants {}",
            y.len(),
            spec.input_dim_y
        )));
    }
    if spec.kind == NetKind::Picnn {
        match x {
            None => {
                return Err(NetError::DimMismatch("PICNN forward requires x".into()));
            }
            Some(x) if x.len() != spec.input_dim_x => {
                return Err(NetError::DimMismatch(format!(
                    "x has length {}, spec wants {}",
                    x.len(),
                    spec.input_dim_x
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Evaluates the network and records the tape needed for the backward
/// passes. A FICNN ignores `x`.
pub fn forward(
    params: &Params,
    x: Option<ArrayView1<f64>>,
    y: ArrayView1<f64>,
) -> Result<(f64, GradTape), NetError> {
    let spec = params.spec();
    check_forward_dims(spec, x.as_ref(), &y)?;
    let k = spec.layer_count();
    let act = spec.activation;

    match params {
        Params::Ficnn(p) => {
            let mut pre = Vec::with_capacity(k);
            let mut z: Vec<Array1<f64>> = Vec::with_capacity(k + 1);
            z.push(Array1::zeros(0));
            for i in 0..k {
                let mut a = p.w_y[i].dot(&y) + &p.b[i];
                if i >= 1 {
                    a += &p.w_z[i - 1].dot(&z[i]);
                }
                let zi = if i == k - 1 {
                    a.clone()
                } else {
                    a.mapv(|v| act.value(v))
                };
                pre.push(a);
                z.push(zi);
            }
            let value = z[k][0];
            Ok((
                value,
                GradTape {
                    y: y.to_owned(),
                    x: None,
                    pre,
                    z,
                    u: Vec::new(),
                    pre_u: Vec::new(),
                    gate_z_raw: Vec::new(),
                    gate_z: Vec::new(),
                    gate_y: Vec::new(),
                    value,
                },
            ))
        }
        Params::Picnn(p) => {
            let x = x.expect("checked above");
            // x-path: k-1 transitions, the last one linear.
            let mut u: Vec<Array1<f64>> = Vec::with_capacity(k);
            let mut pre_u = Vec::with_capacity(k.saturating_sub(1));
            u.push(x.to_owned());
            for i in 0..k - 1 {
                let a = p.w_x[i].dot(&u[i]) + &p.b_x[i];
                let ui = if i == k - 2 {
                    a.clone()
                } else {
                    a.mapv(|v| act.value(v))
                };
                pre_u.push(a);
                u.push(ui);
            }
            // z-path.
            let mut pre = Vec::with_capacity(k);
            let mut z: Vec<Array1<f64>> = Vec::with_capacity(k + 1);
            let mut gate_z_raw = Vec::with_capacity(k - 1);
            let mut gate_z = Vec::with_capacity(k - 1);
            let mut gate_y = Vec::with_capacity(k);
            z.push(Array1::zeros(0));
            for i in 0..k {
                let t = p.w_yu[i].dot(&u[i]) + &p.b_y[i];
                let mut a = p.w_y[i].dot(&(&y.to_owned() * &t)) + p.w_u[i].dot(&u[i]) + &p.b[i];
                if i >= 1 {
                    let q = p.w_zu[i - 1].dot(&u[i]) + &p.b_z[i - 1];
                    let s = q.mapv(|v| v.max(0.0));
                    a += &p.w_z[i - 1].dot(&(&z[i] * &s));
                    gate_z_raw.push(q);
                    gate_z.push(s);
                }
                gate_y.push(t);
                let zi = if i == k - 1 {
                    a.clone()
                } else {
                    a.mapv(|v| act.value(v))
                };
                pre.push(a);
                z.push(zi);
            }
            let value = z[k][0];
            Ok((
                value,
                GradTape {
                    y: y.to_owned(),
                    x: Some(x.to_owned()),
                    pre,
                    z,
                    u,
                    pre_u,
                    gate_z_raw,
                    gate_z,
                    gate_y,
                    value,
                },
            ))
        }
    }
}

/// A plain feedforward network X -> R^p (hidden layers activated, linear
/// output), used as the x-path of an embedded PICNN and as the multi-label
/// baseline.
#[derive(Clone, Debug)]
pub struct Feedforward {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

impl Feedforward {
    /// Seeded uniform init in [-scale, scale] with zero biases, mirroring
    /// [`init_params`].
    pub fn init(
        dims: &[usize],
        activation: Activation,
        seed: u64,
        scale: f64,
    ) -> Result<Feedforward, NetError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(NetError::InvalidSpec(
                "feedforward needs >= 2 positive layer dims".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in dims.windows(2) {
            let (din, dout) = (win[0], win[1]);
            let mut w = Array2::zeros((dout, din));
            for v in w.iter_mut() {
                let u: f64 = rng.gen();
                *v = -scale + 2.0 * scale * u;
            }
            weights.push(w);
            biases.push(Array1::zeros(dout));
        }
        Ok(Feedforward {
            weights,
            biases,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("nonempty").nrows()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::DimMismatch(format!(
                "feedforward input has length {}, wants {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.weights.len() - 1;
        let mut h = x.to_owned();
        for (i, (w, b)) in self.weights.iter().zip(self.biases.iter()).enumerate() {
            let a = w.dot(&h) + b;
            h = if i == last {
                a
            } else {
                a.mapv(|v| self.activation.value(v))
            };
        }
        Ok(h)
    }
}

/// Builds the PICNN that evaluates exactly to `ff(x)^T y`: the x-path is the
/// feedforward component and the y-path is zero except for an identity
/// y-gate and a summing output row on the last layer.
pub fn embed_feedforward(ff: &Feedforward, p: usize) -> Result<Params, NetError> {
    if ff.output_dim() != p {
        return Err(NetError::DimMismatch(format!(
            "feedforward outputs {} dims, embedding wants {}",
            ff.output_dim(),
            p
        )));
    }
    let k = ff.weights.len() + 1;
    let mut u_widths: Vec<usize> = ff.weights.iter().map(|w| w.nrows()).collect();
    debug_assert_eq!(u_widths.last().copied(), Some(p));
    let layer_widths = vec![1usize; k - 1];
    let spec = NetworkSpec::picnn(
        ff.input_dim(),
        p,
        layer_widths,
        std::mem::take(&mut u_widths),
        ff.activation,
    );
    let mut params = Params::zeros(&spec)?;
    {
        let pp = match &mut params {
            Params::Picnn(pp) => pp,
            Params::Ficnn(_) => unreachable!(),
        };
        for (i, (w, b)) in ff.weights.iter().zip(ff.biases.iter()).enumerate() {
            pp.w_x[i] = w.clone();
            pp.b_x[i] = b.clone();
        }
        pp.w_yu[k - 1] = Array2::eye(p);
        pp.w_y[k - 1] = Array2::ones((1, p));
    }
    Ok(params)
}

//! Text export of the exact-inference linear program for relu FICNNs.
//!
//! The LP relaxes each relu equality to the pair of inequalities
//! `z_{i+1} >= w_z_i z_i + w_y_i y + b_i` and `z_i >= 0`, minimizes the
//! output variable, and bounds `y` to the unit box. Minimizing the output
//! tightens one inequality per unit, which recovers the relu exactly, so
//! the LP optimum equals the network minimum over the box.
//!
//! Format (one constraint per line, coefficients with 17 significant
//! digits):
//!
//! ```text
//! OBJECTIVE
//! min: z<k>_0
//! CONSTRAINTS
//! c<i>_<j>: z<i+1>_<j> - <coef>*z<i>_<l> ... - <coef>*y_<l> ... >= <b>
//! CONSTRAINTS (nonnegativity): z<i>_<j> >= 0 lines live in BOUNDS
//! BOUNDS
//! 0 <= y_<j> <= 1
//! z<i>_<j> >= 0        (hidden layers)
//! z<k>_0 free
//! ```

use std::io::Write;

use super::{Activation, FicnnParams, NetError};

fn coef(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Writes the LP for `minimize f(y)` over `y in [0,1]^n` to `out`.
/// Only relu (or pure linear, k = 1) networks admit this formulation.
pub fn write_lp<W: Write>(params: &FicnnParams, out: &mut W) -> Result<(), std::io::Error> {
    let k = params.spec.layer_count();
    let p = params.spec.input_dim_y;

    writeln!(out, "OBJECTIVE")?;
    writeln!(out, "min: z{}_0", k)?;
    writeln!(out, "CONSTRAINTS")?;
    for i in 0..k {
        let rows = params.spec.m(i + 1);
        for j in 0..rows {
            let mut line = format!("c{}_{}: z{}_{}", i, j, i + 1, j);
            if i >= 1 {
                let wz = &params.w_z[i - 1];
                for l in 0..params.spec.m(i) {
                    let w = wz[(j, l)];
                    if w != 0.0 {
                        line.push_str(&format!(" - {}*z{}_{}", coef(w), i, l));
                    }
                }
            }
            let wy = &params.w_y[i];
            for l in 0..p {
                let w = wy[(j, l)];
                if w != 0.0 {
                    line.push_str(&format!(" - {}*y_{}", coef(w), l));
                }
            }
            line.push_str(&format!(" >= {}", coef(params.b[i][j])));
            writeln!(out, "{}", line)?;
        }
    }
    writeln!(out, "BOUNDS")?;
    for l in 0..p {
        writeln!(out, "0 <= y_{} <= 1", l)?;
    }
    for i in 1..k {
        for j in 0..params.spec.m(i) {
            writeln!(out, "z{}_{} >= 0", i, j)?;
        }
    }
    writeln!(out, "z{}_0 free", k)?;
    Ok(())
}

/// Renders the LP to a string. Errors if the network uses an activation
/// other than relu, for which the formulation is invalid.
pub fn export_lp(params: &FicnnParams) -> Result<String, NetError> {
    if params.spec.activation != Activation::Relu {
        return Err(NetError::ReluRequired(params.spec.activation));
    }
    let mut buf = Vec::new();
    write_lp(params, &mut buf).expect("writing to Vec cannot fail");
    Ok(String::from_utf8(buf).expect("LP text is ASCII"))
}

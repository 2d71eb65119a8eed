//! Small dense linear solves. Systems here are tiny (bundle duals and the
//! reduced KKT system, dimension <= active cuts + 1), so Gaussian
//! elimination with partial pivoting is plenty.

use ndarray::{Array1, Array2};

/// Solves `a x = b` in place via LU with partial pivoting. Returns the
/// solution and the smallest absolute pivot encountered, or None if a pivot
/// is exactly zero.
pub(crate) fn solve_dense(
    mut a: Array2<f64>,
    mut b: Array1<f64>,
) -> Option<(Array1<f64>, f64)> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "square system required");
    assert_eq!(b.len(), n, "rhs length mismatch");
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = a[(col, col)].abs();
        for r in col + 1..n {
            let v = a[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val == 0.0 || !pivot_val.is_finite() {
            return None;
        }
        min_pivot = min_pivot.min(pivot_val);
        if pivot_row != col {
            for c in 0..n {
                a.swap((col, c), (pivot_row, c));
            }
            b.swap(col, pivot_row);
        }
        let diag = a[(col, col)];
        for r in col + 1..n {
            let factor = a[(r, col)] / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[(r, c)] -= factor * a[(col, c)];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = b[col];
        for c in col + 1..n {
            v -= a[(col, c)] * b[c];
        }
        b[col] = v / a[(col, col)];
    }
    if b.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((b, min_pivot))
}

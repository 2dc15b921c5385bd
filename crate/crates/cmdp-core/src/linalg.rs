//! Small dense linear-algebra helpers shared by the solvers.
//!
//! Every system solved here is tiny (state counts in the tens, at most the
//! upper-level catalog size), so Gaussian elimination with partial pivoting
//! is plenty; no external LAPACK backend is pulled in.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

/// A numerically singular coefficient matrix.
///
/// Cannot occur for the systems built from valid inputs in this crate
/// (`I - γP` with row-stochastic `P` and `γ < 1` is strictly diagonally
/// dominant); seeing it means an invalid matrix slipped through validation.
#[derive(Debug, Clone, Error)]
#[error("linear system is singular (pivot {pivot:.3e} in column {col})")]
pub struct SingularSystem {
    pub col: usize,
    pub pivot: f64,
}

const PIVOT_FLOOR: f64 = 1e-300;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, SingularSystem> {
    let n = b.len();
    let rhs = b.view().insert_axis(ndarray::Axis(1)).to_owned();
    let x = solve_multi(a, &rhs)?;
    Ok(x.column(0).to_owned().into_shape_with_order(n).unwrap())
}

/// Solves `a X = B` for a matrix of right-hand sides.
pub fn solve_multi(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, SingularSystem> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "coefficient matrix must be square");
    assert_eq!(b.nrows(), n, "right-hand side has wrong row count");
    let mut lu = a.clone();
    let mut x = b.clone();
    let k = x.ncols();

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu[(col, col)].abs();
        for r in col + 1..n {
            let v = lu[(r, col)].abs();
            if v > pivot_val {
                pivot_row = r;
                pivot_val = v;
            }
        }
        if pivot_val < PIVOT_FLOOR || !pivot_val.is_finite() {
            return Err(SingularSystem {
                col,
                pivot: pivot_val,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                lu.swap((col, j), (pivot_row, j));
            }
            for j in 0..k {
                x.swap((col, j), (pivot_row, j));
            }
        }
        let pivot = lu[(col, col)];
        for r in col + 1..n {
            let factor = lu[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                lu[(r, j)] -= factor * lu[(col, j)];
            }
            for j in 0..k {
                x[(r, j)] -= factor * x[(col, j)];
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..k {
            let mut acc = x[(col, j)];
            for c in col + 1..n {
                acc -= lu[(col, c)] * x[(c, j)];
            }
            x[(col, j)] = acc / lu[(col, col)];
        }
    }
    Ok(x)
}

/// `max_i |a_i - b_i|`.
pub fn sup_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `max_i |a_i|`.
pub fn sup_norm(a: ArrayView1<f64>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Total-variation distance `½ Σ |p_i - q_i|` without a length check.
pub(crate) fn tv_unchecked(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    0.5 * p
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

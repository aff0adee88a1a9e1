//! Small dense linear-algebra helpers shared across modules.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue cutoff for generalized inverses: eigenvalues below
/// `PINV_RTOL * max_eigenvalue` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// Moore–Penrose pseudo-inverse of a symmetric positive semidefinite matrix
/// via symmetric eigendecomposition, together with the numerical rank.
pub fn sym_pseudo_inverse(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    assert_eq!(a.nrows(), a.ncols(), "matrix must be square");
    let eig = a.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tol = PINV_RTOL * max_abs;
    let mut rank = 0;
    let inv_vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| {
            if v.abs() > tol && max_abs > 0.0 {
                rank += 1;
                1.0 / v
            } else {
                0.0
            }
        })
        .collect();
    let q = &eig.eigenvectors;
    let k = a.nrows();
    let mut scaled = q.clone();
    for (j, &v) in inv_vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let mut pinv = scaled * q.transpose();
    // symmetrize away factorization roundoff
    for i in 0..k {
        for j in (i + 1)..k {
            let s = 0.5 * (pinv[(i, j)] + pinv[(j, i)]);
            pinv[(i, j)] = s;
            pinv[(j, i)] = s;
        }
    }
    (pinv, rank)
}

/// Least-squares slope of y on x (with intercept).
pub fn lsq_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(
            "slope fit needs at least two (x, y) pairs of equal length",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs non-constant x values"));
    }
    Ok(sxy / sxx)
}

/// 8-point Gauss–Legendre rule on [-1, 1] (exact for polynomials of degree
/// up to 15, far above what piecewise-cubic Gram integrands need).
const GL8_NODES: [f64; 8] = [
    -0.960289856497536,
    -0.796666477413627,
    -0.525532409916329,
    -0.183434642495650,
    0.183434642495650,
    0.525532409916329,
    0.796666477413627,
    0.960289856497536,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101228536290376,
    0.222381034453374,
    0.313706645877887,
    0.362683783378362,
    0.362683783378362,
    0.313706645877887,
    0.222381034453374,
    0.101228536290376,
];

/// ∫_a^b f(t) dt by composite 8-point Gauss–Legendre over the given
/// breakpoint intervals (breaks must be increasing and span [a, b]).
pub fn gauss_legendre_cells<F: FnMut(f64) -> DVector<f64>>(
    breaks: &[f64],
    mut f: F,
    out_len: usize,
) -> DVector<f64> {
    let mut acc = DVector::zeros(out_len);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (t, wt) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
            acc += f(mid + half * t) * (wt * half);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pseudo_inverse_of_full_rank_matrix_inverts() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (pinv, rank) = sym_pseudo_inverse(&a);
        assert_eq!(rank, 2);
        let prod = &a * &pinv;
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_inverse_acts_as_identity_on_row_space() {
        // rank-1 projector-ish matrix: a = v v'
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let a = &v * v.transpose();
        let (pinv, rank) = sym_pseudo_inverse(&a);
        assert_eq!(rank, 1);
        // a⁺ a a = a (Moore–Penrose)
        let b = &a * &pinv * &a;
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(b[(i, j)], a[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert_abs_diff_eq!(lsq_slope(&x, &y).unwrap(), 2.5, epsilon = 1e-12);
        assert!(lsq_slope(&x[..1], &y[..1]).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // ∫_0^2 t^7 dt = 32
        let val = gauss_legendre_cells(&[0.0, 1.0, 2.0], |t| DVector::from_vec(vec![t.powi(7)]), 1);
        assert_abs_diff_eq!(val[0], 32.0, epsilon = 1e-10);
    }
}

//! Small dense routines that the rest of the crate relies on.

use crate::error::{Error, Result};
use crate::Matrix;

/// Sweep cap for [`symmetric_eigenvalues`].
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Only the lower triangle is trusted to be consistent with the upper one;
/// the caller guarantees symmetry. Iterates until the off-diagonal Frobenius
/// norm drops below `1e-15 * ||A||_F` (or exactly zero).
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let mut m = a.clone();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_JACOBI_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= 1e-15 * scale {
            let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            eig.sort_by(|x, y| x.total_cmp(y));
            return Ok(eig);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, p, q);
            }
        }
    }
    Err(Error::ConvergenceFailure {
        what: "Jacobi eigensolver",
        iterations: MAX_JACOBI_SWEEPS,
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

// Annihilates m[p][q] with a two-sided Givens rotation.
fn rotate(m: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
}

pub fn is_symmetric(a: &Matrix, tol: f64) -> bool {
    a.is_square() && (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_matrix_is_returned_sorted() {
        let a = Matrix::from_diagonal(&crate::Vector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(symmetric_eigenvalues(&a).unwrap(), vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigenvalues(&a).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14);
        assert!((e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn non_square_rejected() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            symmetric_eigenvalues(&a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        // nalgebra's Householder/QR solver is an independent route.
        #[test]
        fn agrees_with_householder_qr(n in 1usize..9, seed in prop::collection::vec(-10.0f64..10.0, 81)) {
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    a[(i, j)] = seed[i * 9 + j];
                    a[(j, i)] = seed[i * 9 + j];
                }
            }
            let ours = symmetric_eigenvalues(&a).unwrap();
            let mut theirs: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
            theirs.sort_by(|x, y| x.total_cmp(y));
            let scale = a.norm().max(1.0);
            for (x, y) in ours.iter().zip(&theirs) {
                prop_assert!((x - y).abs() <= 1e-11 * scale, "{x} vs {y}");
            }
        }
    }
}

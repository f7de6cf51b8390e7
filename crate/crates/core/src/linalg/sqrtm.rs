//! Principal matrix square root via the Schur method.
//!
//! For `A = Q U Qᴴ` with `U` upper triangular, the square root of `U` is
//! built by the Björck–Hammarling recurrence and rotated back. The principal
//! root exists iff no eigenvalue lies on the closed negative real axis; a
//! zero eigenvalue is reported separately because it also makes the inverse
//! root (used for the residue representation) undefined.

use super::{eig::schur, norm_max, CMat};
use crate::error::{TomoError, TomoResult};

/// Relative threshold below which an eigenvalue counts as zero.
const SINGULAR_TOL: f64 = 1e-12;
/// Relative imaginary-part threshold for "on the negative real axis".
const NEGATIVE_AXIS_TOL: f64 = 1e-12;

/// Compute the principal square root `S` of a square complex matrix,
/// `S·S = A`, with all eigenvalues of `S` in the open right half plane.
///
/// Fails with [`TomoError::SingularR`] when an eigenvalue is zero to within
/// `1e-12` (relative) and [`TomoError::NoPrincipalRoot`] when an eigenvalue
/// lies on the open negative real axis.
pub fn sqrtm(a: &CMat) -> TomoResult<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(TomoError::DimensionMismatch(format!(
            "matrix square root needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let (q, u) = schur(a)?;
    let scale = norm_max(&u).max(f64::MIN_POSITIVE);

    for i in 0..n {
        let lam = u[(i, i)];
        if lam.norm() < SINGULAR_TOL * scale {
            return Err(TomoError::SingularR {
                smallest: lam.norm(),
            });
        }
        if lam.re < 0.0 && lam.im.abs() <= NEGATIVE_AXIS_TOL * lam.norm() {
            return Err(TomoError::NoPrincipalRoot { eigenvalue: lam });
        }
    }

    // Björck–Hammarling: S is upper triangular with S[i,i] = √U[i,i]
    // (principal branch) and, filling superdiagonals outward,
    //   S[i,j] = (U[i,j] − Σ_{i<k<j} S[i,k] S[k,j]) / (S[i,i] + S[j,j]).
    let mut s = CMat::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = u[(i, i)].sqrt();
    }
    for off in 1..n {
        for i in 0..n - off {
            let j = i + off;
            let mut acc = u[(i, j)];
            for k in i + 1..j {
                acc -= s[(i, k)] * s[(k, j)];
            }
            s[(i, j)] = acc / (s[(i, i)] + s[(j, j)]);
        }
    }

    Ok(&q * s * q.adjoint())
}

/// Principal inverse square root, `(√A)⁻¹`.
pub fn inv_sqrtm(a: &CMat) -> TomoResult<CMat> {
    let s = sqrtm(a)?;
    s.clone()
        .try_inverse()
        .ok_or_else(|| TomoError::SingularR {
            smallest: 0.0,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, C64};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sqrt_squares_back() {
        let a = CMat::from_row_slice(
            3,
            3,
            &[
                c(4.0, 1.0),
                c(1.0, -0.5),
                c(0.2, 0.3),
                c(-0.7, 0.2),
                c(3.0, -2.0),
                c(0.5, 0.0),
                c(0.1, 0.1),
                c(-0.3, 0.4),
                c(2.0, 5.0),
            ],
        );
        let s = sqrtm(&a).unwrap();
        assert!(norm_max(&(&s * &s - &a)) < 1e-12 * norm_max(&a));
    }

    #[test]
    fn principal_branch_right_half_plane() {
        let a = CMat::from_row_slice(2, 2, &[c(-1.0, 2.0), c(0.5, 0.0), c(0.0, 0.0), c(-2.0, -3.0)]);
        let s = sqrtm(&a).unwrap();
        let eigs = crate::linalg::eig::eigenvalues(&s).unwrap();
        for e in eigs {
            assert!(e.re > 0.0, "eigenvalue {e} of the root is not in the right half plane");
        }
    }

    #[test]
    fn sqrt_of_positive_diagonal() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 0)] = c(9.0, 0.0);
        a[(1, 1)] = c(16.0, 0.0);
        let s = sqrtm(&a).unwrap();
        assert!((s[(0, 0)] - c(3.0, 0.0)).norm() < 1e-14);
        assert!((s[(1, 1)] - c(4.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn negative_real_eigenvalue_rejected() {
        let mut a = identity(2);
        a[(1, 1)] = c(-4.0, 0.0);
        match sqrtm(&a) {
            Err(TomoError::NoPrincipalRoot { eigenvalue }) => {
                assert!((eigenvalue - c(-4.0, 0.0)).norm() < 1e-12);
            }
            other => panic!("expected NoPrincipalRoot, got {other:?}"),
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let mut a = identity(2);
        a[(0, 0)] = c(0.0, 0.0);
        match sqrtm(&a) {
            Err(TomoError::SingularR { .. }) => {}
            other => panic!("expected SingularR, got {other:?}"),
        }
    }

    #[test]
    fn inverse_root_multiplies_to_identity() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 1.0), c(0.3, -0.4), c(-0.1, 0.2), c(1.5, -2.0)]);
        let s = sqrtm(&a).unwrap();
        let si = inv_sqrtm(&a).unwrap();
        assert!(norm_max(&(&s * &si - identity(2))) < 1e-13);
        assert!(norm_max(&(si * s - identity(2))) < 1e-13);
    }
}

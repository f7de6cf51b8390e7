//! Dense complex linear algebra used throughout the crate.
//!
//! All matrices are `nalgebra::DMatrix<Complex<f64>>`. The submodules add the
//! pieces nalgebra does not ship for complex matrices: a sorted
//! eigendecomposition built on the complex Schur form ([`eig`]), the matrix
//! exponential via Padé approximation with scaling and squaring ([`expm`]),
//! and the principal matrix square root via the Schur method ([`sqrtm`]).

pub mod eig;
pub mod expm;
pub mod sqrtm;

use nalgebra::DMatrix;
use num_complex::Complex;

/// Complex double-precision scalar.
pub type C64 = Complex<f64>;
/// Dense complex matrix.
pub type CMat = DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;

/// Kronecker product with the convention
/// `(A ⊗ B)[i·n + j, k·n + l] = A[i, k] · B[j, l]`
/// where `n` is the column/row dimension of `B` and all indices are 0-based.
///
/// Equivalently: the first factor indexes the coarse blocks, the second the
/// entries within each block. For the column-stacking vectorisation `vec`
/// used in this crate, `(A ⊗ B) vec(X) = vec(B X Aᵀ)`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for k in 0..ac {
            let aik = a[(i, k)];
            for j in 0..br {
                for l in 0..bc {
                    out[(i * br + j, k * bc + l)] = aik * b[(j, l)];
                }
            }
        }
    }
    out
}

/// Entry-wise complex conjugate (no transpose).
pub fn conj(a: &CMat) -> CMat {
    a.map(|z| z.conj())
}

/// `n × n` complex identity.
pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Maximum absolute column sum (operator 1-norm).
pub fn norm_1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry magnitude.
pub fn norm_max(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Condition number estimate in the 1-norm, `‖A‖₁ · ‖A⁻¹‖₁`.
///
/// Returns `f64::INFINITY` when the matrix is not invertible to machine
/// precision.
pub fn cond_1(a: &CMat) -> f64 {
    match a.clone().try_inverse() {
        Some(inv) => norm_1(a) * norm_1(&inv),
        None => f64::INFINITY,
    }
}

/// Invert via LU with partial pivoting, failing gracefully on singularity.
pub fn try_inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

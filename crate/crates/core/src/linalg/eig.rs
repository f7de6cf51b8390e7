//! Eigendecomposition of general complex matrices via the Schur form.
//!
//! nalgebra computes a complex Schur decomposition `A = Q U Qᴴ` with `U`
//! upper triangular; this module adds what the tomography pipeline needs on
//! top of it:
//!
//! * the full eigendecomposition `A = X Λ X⁻¹` with eigenvalues sorted by
//!   descending real part (ties by descending imaginary part), obtained by
//!   back-substituting eigenvectors of the triangular factor;
//! * the dominant eigenpair `(λ₁, r₁, l₁)` alone, obtained by reordering the
//!   Schur form so the dominant eigenvalue leads — this avoids forming (and
//!   conditioning on) the full eigenvector basis.

use nalgebra::linalg::Schur;

use super::{norm_max, CMat, CVec, C64};
use crate::error::{TomoError, TomoResult};

/// Relative eigenvalue-gap threshold below which the dominant direction is
/// considered degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

/// Condition-number limit for the eigenvector basis.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Complex Schur decomposition `A = Q U Qᴴ` with `U` upper triangular.
pub fn schur(a: &CMat) -> TomoResult<(CMat, CMat)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(TomoError::DimensionMismatch(format!(
            "Schur decomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Schur::try_new(a.clone(), 1.0e-14, 0)
        .map(|s| s.unpack())
        .ok_or_else(|| TomoError::ConvergenceFailure {
            routine: "complex Schur decomposition".into(),
            detail: format!("QR iteration did not converge for a {n}x{n} matrix"),
        })
}

/// Eigenvalues only (unsorted), read off the triangular Schur factor.
pub fn eigenvalues(a: &CMat) -> TomoResult<Vec<C64>> {
    let (_, u) = schur(a)?;
    Ok((0..u.nrows()).map(|i| u[(i, i)]).collect())
}

/// Sort eigenvalue indices by descending real part, ties by descending
/// imaginary part (so `a + bi` precedes `a - bi` in a conjugate pair).
pub fn sort_indices_desc(values: &[C64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        values[j]
            .re
            .total_cmp(&values[i].re)
            .then(values[j].im.total_cmp(&values[i].im))
    });
    idx
}

/// Full eigendecomposition `A = X Λ X⁻¹` with sorted eigenvalues and
/// unit-norm eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    /// Eigenvalues, descending by real part (ties by imaginary part).
    pub values: Vec<C64>,
    /// Eigenvector matrix; column `k` is a unit-norm eigenvector for
    /// `values[k]`.
    pub x: CMat,
    /// Inverse of the eigenvector matrix.
    pub xinv: CMat,
    /// 1-norm condition number of `x`.
    pub cond: f64,
}

impl Eigendecomposition {
    /// Decompose a general complex square matrix.
    ///
    /// Fails with [`TomoError::IllConditionedBasis`] when the eigenvector
    /// matrix has a 1-norm condition number above [`CONDITION_LIMIT`], and
    /// with [`TomoError::ConvergenceFailure`] when a computed pair fails the
    /// residual check `‖A xₖ − λₖ xₖ‖ ≤ 1e-10 · max(1, ‖A‖)`.
    pub fn new(a: &CMat) -> TomoResult<Self> {
        let n = a.nrows();
        let (q, u) = schur(a)?;
        let scale = norm_max(&u).max(1.0);

        // Right eigenvectors of the triangular factor by back-substitution:
        // for eigenvalue u[k,k], set y[k] = 1 and solve upward. Near-equal
        // diagonal entries give a tiny denominator; it is floored so the
        // computation always completes, and genuinely bad bases are caught by
        // the condition-number check below.
        let mut x = CMat::zeros(n, n);
        for k in 0..n {
            let lambda = u[(k, k)];
            let mut y = CVec::zeros(n);
            y[k] = C64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = C64::new(0.0, 0.0);
                for j in i + 1..=k {
                    s += u[(i, j)] * y[j];
                }
                let mut denom = lambda - u[(i, i)];
                if denom.norm() < f64::EPSILON * scale {
                    denom = C64::new(f64::EPSILON * scale, 0.0);
                }
                y[i] = s / denom;
            }
            let mut col = &q * y;
            let norm = col.norm();
            col /= C64::new(norm, 0.0);
            // Canonical phase: rotate so the largest-magnitude component is
            // real and positive. Besides determinism, this keeps the basis
            // of a real matrix with a real spectrum (entrywise) real, so
            // similarity transforms into that basis stay real too.
            let mut pivot = 0;
            for i in 1..n {
                if col[i].norm() > col[pivot].norm() {
                    pivot = i;
                }
            }
            let mag = col[pivot].norm();
            if mag > 0.0 {
                let phase = col[pivot] / C64::new(mag, 0.0);
                col /= phase;
            }
            x.set_column(k, &col);
        }

        let values: Vec<C64> = (0..n).map(|i| u[(i, i)]).collect();
        let order = sort_indices_desc(&values);
        let sorted_values: Vec<C64> = order.iter().map(|&i| values[i]).collect();
        let mut sorted_x = CMat::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            sorted_x.set_column(dst, &x.column(src));
        }

        let xinv = sorted_x
            .clone()
            .try_inverse()
            .ok_or(TomoError::IllConditionedBasis {
                cond: f64::INFINITY,
                limit: CONDITION_LIMIT,
            })?;
        let cond = super::norm_1(&sorted_x) * super::norm_1(&xinv);
        if cond > CONDITION_LIMIT {
            return Err(TomoError::IllConditionedBasis {
                cond,
                limit: CONDITION_LIMIT,
            });
        }

        // Per-pair residual check: the back-substituted vectors must actually
        // be eigenvectors of A to near machine precision.
        let tol = 1e-10 * norm_max(a).max(1.0);
        for k in 0..n {
            let col = sorted_x.column(k);
            let resid = a * col - col * sorted_values[k];
            let r = resid.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if r > tol {
                return Err(TomoError::ConvergenceFailure {
                    routine: "eigendecomposition".into(),
                    detail: format!(
                        "eigenpair {k} residual {r:.3e} exceeds tolerance {tol:.3e}"
                    ),
                });
            }
        }

        Ok(Self {
            values: sorted_values,
            x: sorted_x,
            xinv,
            cond,
        })
    }
}

/// Dominant eigentriple of a general complex matrix.
///
/// `left` and `right` satisfy `A·right = λ·right`, `leftᵀ·A = λ·leftᵀ`
/// (note: plain transpose, not conjugate transpose) and `leftᵀ·right = 1`.
#[derive(Debug, Clone)]
pub struct DominantPair {
    pub lambda: C64,
    pub right: CVec,
    pub left: CVec,
}

/// Compute the eigenvalue of largest real part together with its right and
/// left eigenvectors, normalised so `leftᵀ·right = 1`.
///
/// Works by reordering the Schur form to bring the dominant eigenvalue to the
/// leading position, so no full eigenvector basis is formed. Fails with
/// [`TomoError::DegenerateSpectrum`] when the two largest real parts are
/// closer than [`DEGENERACY_THRESHOLD`] (relative).
pub fn dominant_pair(a: &CMat) -> TomoResult<DominantPair> {
    let n = a.nrows();
    let (mut q, mut u) = schur(a)?;

    // Locate the dominant eigenvalue and check it is isolated in real part.
    let diag: Vec<C64> = (0..n).map(|i| u[(i, i)]).collect();
    let order = sort_indices_desc(&diag);
    let p = order[0];
    if n > 1 {
        let gap = diag[order[0]].re - diag[order[1]].re;
        let threshold = DEGENERACY_THRESHOLD * diag[order[0]].re.abs().max(1.0);
        if gap < threshold {
            return Err(TomoError::DegenerateSpectrum { gap, threshold });
        }
    }

    // Bubble the dominant eigenvalue to the front with 2x2 unitary swaps.
    for i in (0..p).rev() {
        swap_adjacent(&mut q, &mut u, i)?;
    }

    let lambda = u[(0, 0)];
    let right: CVec = q.column(0).into_owned();

    // Left eigenvector of the (reordered) triangular factor at position 0 by
    // forward substitution: w₀ = 1, wⱼ = Σ_{i<j} wᵢ u[i,j] / (λ − u[j,j]).
    let scale = norm_max(&u).max(1.0);
    let mut w = CVec::zeros(n);
    w[0] = C64::new(1.0, 0.0);
    for j in 1..n {
        let mut s = C64::new(0.0, 0.0);
        for i in 0..j {
            s += w[i] * u[(i, j)];
        }
        let mut denom = lambda - u[(j, j)];
        if denom.norm() < f64::EPSILON * scale {
            denom = C64::new(f64::EPSILON * scale, 0.0);
        }
        w[j] = s / denom;
    }
    // lᵀ = wᵀ Qᴴ, i.e. l = conj(Q) w; then lᵀ·right = wᵀ e₁ = w₀ = 1 up to
    // unitarity roundoff, which one rescale removes.
    let left: CVec = q.map(|z| z.conj()) * w;
    let ip: C64 = (left.transpose() * &right)[(0, 0)];
    let left = left / ip;

    Ok(DominantPair {
        lambda,
        right,
        left,
    })
}

/// Swap the eigenvalues at positions `i` and `i+1` of a Schur form `(Q, U)`
/// in place, keeping `U` upper triangular and `Q` unitary.
fn swap_adjacent(q: &mut CMat, u: &mut CMat, i: usize) -> TomoResult<()> {
    let a = u[(i, i)];
    let b = u[(i, i + 1)];
    let c = u[(i + 1, i + 1)];
    let scale = norm_max(u).max(1.0);
    let delta = c - a;
    if delta.norm() < f64::EPSILON * scale {
        // Equal eigenvalues: the ordering is arbitrary, nothing to do.
        return Ok(());
    }
    // Eigenvector of [[a, b], [0, c]] for eigenvalue c is (b/(c−a), 1)ᵀ;
    // extend it to a 2x2 unitary G whose first column is that direction.
    let x0 = b / delta;
    let x1 = C64::new(1.0, 0.0);
    let nrm = (x0.norm_sqr() + 1.0).sqrt();
    let g00 = x0 / nrm;
    let g10 = x1 / nrm;
    let g01 = -g10.conj();
    let g11 = g00.conj();

    let n = u.nrows();
    // Rows i, i+1 of U: U ← Gᴴ U (on those rows).
    for col in 0..n {
        let r0 = u[(i, col)];
        let r1 = u[(i + 1, col)];
        u[(i, col)] = g00.conj() * r0 + g10.conj() * r1;
        u[(i + 1, col)] = g01.conj() * r0 + g11.conj() * r1;
    }
    // Columns i, i+1 of U: U ← U G.
    for row in 0..n {
        let c0 = u[(row, i)];
        let c1 = u[(row, i + 1)];
        u[(row, i)] = c0 * g00 + c1 * g10;
        u[(row, i + 1)] = c0 * g01 + c1 * g11;
    }
    // Columns i, i+1 of Q: Q ← Q G.
    for row in 0..n {
        let c0 = q[(row, i)];
        let c1 = q[(row, i + 1)];
        q[(row, i)] = c0 * g00 + c1 * g10;
        q[(row, i + 1)] = c0 * g01 + c1 * g11;
    }
    // The subdiagonal entry is zero in exact arithmetic; make it so.
    u[(i + 1, i)] = C64::new(0.0, 0.0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_cmat(n: usize, seed: u64) -> CMat {
        // Small deterministic LCG so the unit tests need no RNG dependency.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        CMat::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn eigendecomposition_reconstructs_random_matrices() {
        for seed in 0..10 {
            let a = random_cmat(6, seed + 1);
            let e = Eigendecomposition::new(&a).unwrap();
            let lambda = CMat::from_diagonal(&CVec::from_vec(e.values.clone()));
            let recon = &e.x * lambda * &e.xinv;
            let err = norm_max(&(recon - &a)) / norm_max(&a);
            assert!(err < 1e-11, "seed {seed}: reconstruction error {err:.3e}");
        }
    }

    #[test]
    fn eigenvalues_sorted_descending() {
        let a = random_cmat(7, 99);
        let e = Eigendecomposition::new(&a).unwrap();
        for w in e.values.windows(2) {
            assert!(
                w[0].re > w[1].re || (w[0].re == w[1].re && w[0].im >= w[1].im),
                "not sorted: {:?}",
                e.values
            );
        }
    }

    #[test]
    fn diagonal_matrix_eigenvalues_exact() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 0)] = c(2.0, 0.0);
        a[(1, 1)] = c(-1.0, 3.0);
        a[(2, 2)] = c(-1.0, -3.0);
        let e = Eigendecomposition::new(&a).unwrap();
        assert!((e.values[0] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - c(-1.0, 3.0)).norm() < 1e-14);
        assert!((e.values[2] - c(-1.0, -3.0)).norm() < 1e-14);
    }

    #[test]
    fn dominant_pair_matches_full_decomposition() {
        for seed in 0..10 {
            let a = random_cmat(6, 1000 + seed);
            let e = Eigendecomposition::new(&a).unwrap();
            let d = dominant_pair(&a).unwrap();
            assert!((d.lambda - e.values[0]).norm() < 1e-10 * norm_max(&a));
            // Right residual.
            let r = &a * &d.right - &d.right * d.lambda;
            assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-11 * norm_max(&a));
            // Left residual (plain transpose convention).
            let l = d.left.transpose() * &a - d.left.transpose() * d.lambda;
            assert!(l.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-10 * norm_max(&a));
            // Binormalisation.
            let ip: C64 = (d.left.transpose() * &d.right)[(0, 0)];
            assert!((ip - c(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn dominant_pair_of_identity_plus_rank_one() {
        // A = diag(0, -1, -2) in a rotated basis; dominant eigenvalue 0.
        let a = CMat::from_row_slice(
            3,
            3,
            &[
                c(0.0, 0.0),
                c(0.7, 0.1),
                c(-0.3, 0.0),
                c(0.0, 0.0),
                c(-1.0, 0.0),
                c(0.2, -0.4),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(-2.0, 0.0),
            ],
        );
        let d = dominant_pair(&a).unwrap();
        assert!(d.lambda.norm() < 1e-13);
    }

    #[test]
    fn degenerate_spectrum_rejected() {
        let a = identity(3);
        match dominant_pair(&a) {
            Err(TomoError::DegenerateSpectrum { .. }) => {}
            other => panic!("expected DegenerateSpectrum, got {other:?}"),
        }
    }

    #[test]
    fn one_by_one_matrix() {
        let a = CMat::from_row_slice(1, 1, &[c(-0.5, 0.25)]);
        let e = Eigendecomposition::new(&a).unwrap();
        assert!((e.values[0] - c(-0.5, 0.25)).norm() < 1e-15);
        let d = dominant_pair(&a).unwrap();
        assert!((d.lambda - c(-0.5, 0.25)).norm() < 1e-15);
        let ip: C64 = (d.left.transpose() * &d.right)[(0, 0)];
        assert!((ip - c(1.0, 0.0)).norm() < 1e-14);
    }
}

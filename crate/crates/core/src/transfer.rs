//! Transfer matrix of a translation-invariant continuous matrix-product
//! state, its normalisation and spectral decomposition, and the change of
//! basis that turns correlation evaluation into a diagonal (residue) form.
//!
//! For a state `(Q, R)` of bond dimension `d` the transfer matrix is the
//! `d² × d²` generator
//!
//! ```text
//! T = conj(Q) ⊗ 1 + 1 ⊗ Q + conj(R) ⊗ R
//! ```
//!
//! acting on vectorised density operators. Expectation values decay along
//! the grid as `exp(λ_k τ)` with `λ_k` the eigenvalues of `T`; a normalised
//! state has dominant eigenvalue `λ₁ = 0` and all others strictly in the
//! left half plane, so correlations approach a finite limit at long range.

use crate::error::{TomoError, TomoResult};
use crate::linalg::eig::{eigenvalues, sort_indices_desc, Eigendecomposition};
use crate::linalg::sqrtm::{inv_sqrtm, sqrtm};
use crate::linalg::{conj, identity, kron, norm_max, CMat, C64};
use crate::state::CmpsState;

/// Tolerance on `|Re λ₁|` below which a state counts as normalised.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

/// Relative gap threshold below which the dominant eigenvalue is degenerate.
pub const GAP_THRESHOLD: f64 = 1e-10;

/// Assemble the transfer matrix `conj(Q) ⊗ 1 + 1 ⊗ Q + conj(R) ⊗ R`.
pub fn build_transfer_matrix(state: &CmpsState) -> CMat {
    let id = identity(state.d());
    kron(&conj(state.q()), &id) + kron(&id, state.q()) + kron(&conj(state.r()), state.r())
}

/// Shift `Q` so the dominant transfer eigenvalue becomes zero.
///
/// `Q → Q − (λ₁/2)·1` shifts every transfer eigenvalue by exactly `−λ₁`
/// (the three Kronecker terms contribute `−λ₁/2` twice), so a single shift
/// normalises in exact arithmetic; the loop below polishes away roundoff.
/// The dominant eigenvalue of a valid transfer matrix is real, so only the
/// real part is shifted. Fails with [`TomoError::DegenerateSpectrum`] when
/// the two largest real parts coincide to within [`GAP_THRESHOLD`]
/// (relative), since then no unique stationary direction exists.
pub fn normalize(state: &CmpsState) -> TomoResult<CmpsState> {
    let mut q = state.q().clone();
    let r = state.r().clone();
    let d = state.d();
    for _ in 0..4 {
        let current = CmpsState::new(q.clone(), r.clone())?;
        let t = build_transfer_matrix(&current);
        let values = eigenvalues(&t)?;
        let order = sort_indices_desc(&values);
        let lambda1 = values[order[0]];
        if values.len() > 1 {
            let gap = lambda1.re - values[order[1]].re;
            let threshold = GAP_THRESHOLD * lambda1.re.abs().max(1.0);
            if gap < threshold {
                return Err(TomoError::DegenerateSpectrum { gap, threshold });
            }
        }
        if lambda1.re.abs() <= 5e-14 * norm_max(&t).max(1.0) {
            return Ok(current);
        }
        q -= identity(d) * C64::new(lambda1.re / 2.0, 0.0);
    }
    CmpsState::new(q, r)
}

/// Sorted spectral decomposition `T = X Λ X⁻¹` of a transfer matrix.
#[derive(Debug, Clone)]
pub struct TransferSpectrum {
    /// Eigenvalues sorted by descending real part (ties by descending
    /// imaginary part); `eigenvalues[0]` is the dominant one.
    pub eigenvalues: Vec<C64>,
    /// Eigenvector matrix (unit-norm columns, matching the sorted order).
    pub x: CMat,
    /// Inverse eigenvector matrix.
    pub xinv: CMat,
    /// 1-norm condition number of `x`.
    pub cond: f64,
}

impl TransferSpectrum {
    /// Distance from the dominant eigenvalue to the rest of the spectrum in
    /// real part. Infinite for bond dimension 1 (a single eigenvalue).
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues
            .iter()
            .skip(1)
            .map(|l| self.eigenvalues[0].re - l.re)
            .fold(f64::INFINITY, f64::min)
    }

    /// Number of transfer eigenvalues, `d²`.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// True when every eigenvalue is real to within `tol` (absolute).
    pub fn is_real_spectrum(&self, tol: f64) -> bool {
        self.eigenvalues.iter().all(|l| l.im.abs() <= tol)
    }
}

/// Eigendecompose the transfer matrix of a normalised state.
///
/// Fails with [`TomoError::UnnormalizedState`] when `|Re λ₁|` exceeds
/// [`NORMALIZATION_TOLERANCE`], with [`TomoError::DegenerateSpectrum`] when
/// the dominant eigenvalue is not isolated, and propagates
/// [`TomoError::IllConditionedBasis`] from the eigendecomposition (in which
/// case the direct evaluator in [`crate::correlator`] still works).
pub fn spectral_decompose(state: &CmpsState) -> TomoResult<TransferSpectrum> {
    let t = build_transfer_matrix(state);
    let e = Eigendecomposition::new(&t)?;
    let lambda1 = e.values[0];
    if lambda1.re.abs() > NORMALIZATION_TOLERANCE {
        return Err(TomoError::UnnormalizedState {
            re_lambda1: lambda1.re,
            tolerance: NORMALIZATION_TOLERANCE,
        });
    }
    if e.values.len() > 1 {
        let gap = lambda1.re - e.values[1].re;
        let threshold = GAP_THRESHOLD * lambda1.re.abs().max(1.0);
        if gap < threshold {
            return Err(TomoError::DegenerateSpectrum { gap, threshold });
        }
    }
    Ok(TransferSpectrum {
        eigenvalues: e.values,
        x: e.x,
        xinv: e.xinv,
        cond: e.cond,
    })
}

/// The field-operator chain matrix expressed in the transfer eigenbasis,
/// together with its independently computed inverse.
///
/// `M = X⁻¹ (conj(R)^{1/2} ⊗ R^{−1/2}) X` and
/// `M⁻¹ = X⁻¹ (conj(R)^{−1/2} ⊗ R^{1/2}) X`. Splitting the powers of `R`
/// symmetrically across the two Kronecker slots balances the scale of `M`
/// against `M⁻¹`; any other split is a diagonal similarity and leaves every
/// even-order correlation unchanged.
#[derive(Debug, Clone)]
pub struct ResidueTensor {
    /// Chain matrix in the eigenbasis.
    pub m: CMat,
    /// Inverse chain matrix, computed from `R^{−1/2}` directly rather than
    /// by inverting `m`.
    pub minv: CMat,
    /// Transfer eigenvalues in the same sorted order as the basis.
    pub lambdas: Vec<C64>,
}

impl ResidueTensor {
    /// Second-order residues `r_k = (M⁻¹)₁ₖ · Mₖ₁`: the weight of mode `k`
    /// in the two-point function `C⁽²⁾(τ) = Σ_k r_k e^{λ_k τ}`.
    pub fn residues_order2(&self) -> Vec<C64> {
        (0..self.m.nrows())
            .map(|k| self.minv[(0, k)] * self.m[(k, 0)])
            .collect()
    }
}

/// Build the diagonal-basis chain representation of a normalised state.
///
/// Requires `R` to be invertible with a principal square root; fails with
/// [`TomoError::SingularR`] / [`TomoError::NoPrincipalRoot`] otherwise.
pub fn m_in_diagonal_basis(
    state: &CmpsState,
    spectrum: &TransferSpectrum,
) -> TomoResult<ResidueTensor> {
    let d2 = state.d() * state.d();
    if spectrum.len() != d2 {
        return Err(TomoError::DimensionMismatch(format!(
            "spectrum has {} eigenvalues but the state needs {d2}",
            spectrum.len()
        )));
    }
    let r_half = sqrtm(state.r())?;
    let r_inv_half = inv_sqrtm(state.r())?;
    let a = kron(&conj(&r_half), &r_inv_half);
    let a_inv = kron(&conj(&r_inv_half), &r_half);
    let m = &spectrum.xinv * &a * &spectrum.x;
    let minv = &spectrum.xinv * &a_inv * &spectrum.x;

    // Consistency: the two independently assembled matrices must actually be
    // inverses; failure indicates a badly conditioned R or eigenbasis.
    let prod = &m * &minv;
    let err = norm_max(&(prod - identity(d2)));
    let scale = norm_max(&m) * norm_max(&minv);
    if err > 1e-10 * scale.max(1.0) {
        return Err(TomoError::ConvergenceFailure {
            routine: "diagonal-basis chain construction".into(),
            detail: format!(
                "M·M⁻¹ deviates from identity by {err:.3e} (scale {scale:.3e})"
            ),
        });
    }

    Ok(ResidueTensor {
        m,
        minv,
        lambdas: spectrum.eigenvalues.clone(),
    })
}

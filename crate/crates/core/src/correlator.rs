//! Evaluation of even-order phase correlation functions.
//!
//! An order-`n` correlator at positions `x₁ ≤ x₂ ≤ … ≤ xₙ` (with `n` even)
//! is the expectation of alternating phase differences
//! `⟨cos(θ(x₁) − θ(x₂) + θ(x₃) − …)⟩`. For a state `(Q, R)` it is a product
//! chain along the positions: reading from the first position outward,
//!
//! ```text
//! C = l₁ᵀ · Op(xₙ) e^{T τₙ₋₁} ⋯ Op(x₂) e^{T τ₁} Op(x₁) · r₁
//! ```
//!
//! where `τ_j = x_{j+1} − x_j` are the gaps, `r₁`/`l₁` are the dominant
//! right/left eigenvectors of the transfer matrix `T`, and the vertex
//! operator alternates between `A = conj(R)^{1/2} ⊗ R^{−1/2}` at odd
//! positions and `A⁻¹` at even positions (the signs in the phase sum).
//!
//! Two implementations are provided:
//!
//! * [`eval_correlator_direct`] — matrix exponentials between vertices; only
//!   needs the dominant eigenpair, so it works even when the full transfer
//!   eigenbasis is ill-conditioned.
//! * [`ChainEvaluator`] / [`eval_correlator_diagonal`] — the same chain in
//!   the transfer eigenbasis, where each `e^{Tτ}` is diagonal:
//!   `C = e₁ᵀ M⁻¹ Ẽ(τₙ₋₁) M Ẽ(τₙ₋₂) ⋯ M⁻¹ Ẽ(τ₁) M e₁` with
//!   `Ẽ(τ) = diag(e^{λ_k τ})`. This is the fast path for filling whole
//!   tensors and the representation in which the model is fitted.
//!
//! The two paths share no linear algebra beyond the transfer matrix itself
//! (Padé exponentials versus a Schur eigenbasis), so their agreement is a
//! strong end-to-end check; see the acceptance tests.

use crate::corr::CorrTensor;
use crate::error::{TomoError, TomoResult};
use crate::grid::Grid;
use crate::linalg::eig::dominant_pair;
use crate::linalg::expm::expm;
use crate::linalg::sqrtm::{inv_sqrtm, sqrtm};
use crate::linalg::{conj, kron, try_inverse, CMat, CVec, C64};
use crate::simplex::{simplex_len, SimplexIter};
use crate::state::CmpsState;
use crate::transfer::{build_transfer_matrix, ResidueTensor, NORMALIZATION_TOLERANCE};

/// Largest correlation order the pipeline supports.
pub const MAX_ORDER: usize = 8;

/// Validate an even order in `2..=MAX_ORDER`.
pub fn check_order(order: usize) -> TomoResult<()> {
    if order % 2 != 0 || order == 0 {
        return Err(TomoError::OddOrderUnavailable { order });
    }
    if order > MAX_ORDER {
        return Err(TomoError::OrderTooLarge {
            order,
            max: MAX_ORDER,
        });
    }
    Ok(())
}

fn check_gaps(gaps: &[f64]) -> TomoResult<()> {
    // An even number of gaps means an odd number of positions.
    check_order(gaps.len() + 1)?;
    for (i, &g) in gaps.iter().enumerate() {
        if !(g >= 0.0) {
            return Err(TomoError::NegativeGap { index: i, gap: g });
        }
    }
    Ok(())
}

/// Evaluate one correlator by multiplying matrix exponentials along the
/// position chain.
///
/// `positions` must be non-decreasing with even length `≤ MAX_ORDER`; the
/// state must be normalised (dominant transfer eigenvalue within
/// [`NORMALIZATION_TOLERANCE`] of zero). The returned value is complex; its
/// imaginary part is a numerical diagnostic and vanishes for states with
/// real `(Q, R)`.
pub fn eval_correlator_direct(state: &CmpsState, positions: &[f64]) -> TomoResult<C64> {
    check_order(positions.len())?;
    let n = positions.len();
    let mut gaps = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let g = positions[j + 1] - positions[j];
        if !(g >= 0.0) {
            return Err(TomoError::NegativeGap { index: j, gap: g });
        }
        gaps.push(g);
    }

    let t = build_transfer_matrix(state);
    let dp = dominant_pair(&t)?;
    if dp.lambda.re.abs() > NORMALIZATION_TOLERANCE {
        return Err(TomoError::UnnormalizedState {
            re_lambda1: dp.lambda.re,
            tolerance: NORMALIZATION_TOLERANCE,
        });
    }

    let r_half = sqrtm(state.r())?;
    let r_inv_half = inv_sqrtm(state.r())?;
    let a = kron(&conj(&r_half), &r_inv_half);
    let b = kron(&conj(&r_inv_half), &r_half);

    let mut v: CVec = &a * &dp.right;
    for (j, &tau) in gaps.iter().enumerate() {
        let prop = expm(&(&t * C64::new(tau, 0.0)))?;
        v = &prop * v;
        // Vertex j+2 (1-based): even vertices carry the inverse operator.
        v = if j % 2 == 0 { &b * v } else { &a * v };
    }
    Ok(dp
        .left
        .iter()
        .zip(v.iter())
        .map(|(l, w)| l * w)
        .sum())
}

/// The diagonal-basis chain: transfer eigenvalues plus the vertex matrix `M`
/// and its inverse in that basis.
///
/// This is also the object the fitting stages estimate from data — it is
/// exactly the information content of the correlation functions, without
/// reference to a concrete `(Q, R)` realisation.
#[derive(Debug, Clone)]
pub struct ChainEvaluator {
    lambdas: Vec<C64>,
    m: CMat,
    minv: CMat,
}

impl ChainEvaluator {
    /// Wrap an exactly constructed residue representation.
    pub fn from_residue_tensor(rt: &ResidueTensor) -> Self {
        Self {
            lambdas: rt.lambdas.clone(),
            m: rt.m.clone(),
            minv: rt.minv.clone(),
        }
    }

    /// Build from fitted modes and vertex matrix, inverting `m` numerically.
    pub fn from_modes(lambdas: Vec<C64>, m: CMat) -> TomoResult<Self> {
        let k = lambdas.len();
        if m.nrows() != k || m.ncols() != k {
            return Err(TomoError::DimensionMismatch(format!(
                "vertex matrix is {}x{} but there are {k} modes",
                m.nrows(),
                m.ncols()
            )));
        }
        let minv = try_inverse(&m).ok_or_else(|| TomoError::ConvergenceFailure {
            routine: "chain evaluator construction".into(),
            detail: "vertex matrix is singular".into(),
        })?;
        Ok(Self { lambdas, m, minv })
    }

    pub fn modes(&self) -> &[C64] {
        &self.lambdas
    }

    pub fn vertex_matrix(&self) -> &CMat {
        &self.m
    }

    /// Evaluate the chain for the given gaps (an odd count: `n − 1` gaps for
    /// an even order `n`).
    pub fn eval_gaps(&self, gaps: &[f64]) -> TomoResult<C64> {
        check_gaps(gaps)?;
        let k = self.lambdas.len();
        // v ← M e₁, i.e. the first column of M.
        let mut v: CVec = self.m.column(0).into_owned();
        for (j, &tau) in gaps.iter().enumerate() {
            for i in 0..k {
                v[i] *= (self.lambdas[i] * tau).exp();
            }
            v = if j % 2 == 0 { &self.minv * v } else { &self.m * v };
        }
        Ok(v[0])
    }

    /// Fill the whole canonical simplex of an order-`n` tensor on a grid.
    ///
    /// Returns the tensor of real parts together with the largest imaginary
    /// magnitude encountered (a realness diagnostic; large values signal an
    /// inconsistent model). Prefix chains are cached across the
    /// lexicographic walk, so the cost is close to one short matrix-vector
    /// product per stored entry.
    pub fn fill_simplex(&self, order: usize, grid: Grid) -> TomoResult<(CorrTensor, f64)> {
        check_order(order)?;
        let k = self.lambdas.len();
        let count = grid.count;

        // e^{λ·g·step} for every whole-step gap g.
        let exp_table: Vec<Vec<C64>> = (0..count)
            .map(|g| {
                self.lambdas
                    .iter()
                    .map(|l| (l * (g as f64 * grid.step)).exp())
                    .collect()
            })
            .collect();

        let len = simplex_len(count, order);
        let mut values = vec![0.0f64; len];
        let mut max_imag = 0.0f64;

        // stages[j] = chain state after vertex j+1; stages[0] = M e₁.
        let mut stages: Vec<CVec> = vec![CVec::zeros(k); order];
        stages[0] = self.m.column(0).into_owned();

        let mut it = SimplexIter::new(count, order);
        let mut r = 0usize;
        while let Some((tuple, changed)) = it.next_tuple() {
            let from = changed.max(1);
            for j in from..order {
                let gap_steps = tuple[j] - tuple[j - 1];
                let exps = &exp_table[gap_steps];
                let prev = &stages[j - 1];
                let mut w = CVec::zeros(k);
                for i in 0..k {
                    w[i] = prev[i] * exps[i];
                }
                stages[j] = if j % 2 == 1 { &self.minv * w } else { &self.m * w };
            }
            let val = stages[order - 1][0];
            values[r] = val.re;
            max_imag = max_imag.max(val.im.abs());
            r += 1;
        }

        Ok((CorrTensor::from_values(order, grid, values)?, max_imag))
    }
}

/// Evaluate one correlator in the diagonal basis. Convenience wrapper around
/// [`ChainEvaluator::eval_gaps`] for an exactly constructed state
/// representation.
pub fn eval_correlator_diagonal(rt: &ResidueTensor, gaps: &[f64]) -> TomoResult<C64> {
    ChainEvaluator::from_residue_tensor(rt).eval_gaps(gaps)
}

//! Decay-mode extraction from the two-point function.
//!
//! The two-point correlator of a normalised state is a finite exponential
//! mixture `C⁽²⁾(τ) = Σ_k r_k e^{λ_k τ}` over the transfer eigenvalues, with
//! one mode pinned at `λ = 0` (the long-range limit) and all others strictly
//! decaying. This module recovers `{λ_k, r_k}` from uniform samples in two
//! stages:
//!
//! 1. [`prony_initialize`] — a matrix-pencil (subspace) estimate: build the
//!    Hankel matrix of the samples, identify its signal subspace by SVD, and
//!    read the mode multipliers `z_k = e^{λ_k h}` off a shifted-subspace
//!    eigenvalue problem. Exact for noiseless data of the right order and a
//!    robust starting point otherwise. Modes faster than the sampling limit
//!    (`|Im λ| h ≥ π`) alias and cannot be distinguished; this is checked
//!    and logged.
//! 2. [`refine_least_squares`] — constrained separable least squares:
//!    decay rates parametrised as `Re λ = −u²` (never unstable), complex
//!    modes kept in exact conjugate pairs (`Im λ = ±w²`), residues solved
//!    linearly for each candidate rate configuration, and the rates polished
//!    by Levenberg–Marquardt on the reduced objective. Afterwards the mode
//!    closest to zero is snapped exactly to zero and residues are re-fitted.
//!
//! [`fit_spectrum`] chains both on a gap-averaged two-point tensor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corr::CorrTensor;
use crate::error::{TomoError, TomoResult};
use crate::linalg::{CMat, CVec, C64};

/// Relative singular-value threshold for the signal-subspace rank test.
const RANK_THRESHOLD: f64 = 1e-10;

/// Absolute imaginary-part scale below which a mode counts as real.
const REAL_MODE_TOL: f64 = 1e-9;

/// A finite exponential mixture `f(τ) = Σ_k r_k e^{λ_k τ}`.
///
/// Modes are kept sorted by descending real part (ties by descending
/// imaginary part), matching the transfer-spectrum ordering.
#[derive(Debug, Clone)]
pub struct ExpSumModel {
    lambdas: Vec<C64>,
    residues: Vec<C64>,
}

impl ExpSumModel {
    /// Build a model, sorting modes into canonical order.
    pub fn new(lambdas: Vec<C64>, residues: Vec<C64>) -> TomoResult<Self> {
        if lambdas.len() != residues.len() {
            return Err(TomoError::DimensionMismatch(format!(
                "{} modes but {} residues",
                lambdas.len(),
                residues.len()
            )));
        }
        if lambdas.is_empty() {
            return Err(TomoError::DimensionMismatch(
                "a model needs at least one mode".into(),
            ));
        }
        let order = crate::linalg::eig::sort_indices_desc(&lambdas);
        Ok(Self {
            lambdas: order.iter().map(|&i| lambdas[i]).collect(),
            residues: order.iter().map(|&i| residues[i]).collect(),
        })
    }

    pub fn num_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.lambdas
    }

    pub fn residues(&self) -> &[C64] {
        &self.residues
    }

    /// Model value at separation `tau`.
    pub fn eval(&self, tau: f64) -> C64 {
        self.lambdas
            .iter()
            .zip(&self.residues)
            .map(|(l, r)| r * (l * tau).exp())
            .sum()
    }

    /// Real part of the model value (the physical correlation).
    pub fn eval_real(&self, tau: f64) -> f64 {
        self.eval(tau).re
    }

    /// Check the structural constraints a physical mode set satisfies: no
    /// growing modes, exactly one (real) mode at zero within `tol`, and
    /// closure under complex conjugation of `(λ, r)` pairs.
    pub fn validate(&self, tol: f64) -> TomoResult<()> {
        let scale = self
            .lambdas
            .iter()
            .fold(1.0f64, |a, l| a.max(l.norm()));
        let mut at_zero = 0;
        for l in &self.lambdas {
            if l.re > tol * scale {
                return Err(TomoError::ConstraintInfeasible(format!(
                    "mode {l} grows with distance"
                )));
            }
            if l.re.abs() <= tol * scale {
                at_zero += 1;
            }
        }
        if at_zero != 1 {
            return Err(TomoError::ConstraintInfeasible(format!(
                "{at_zero} modes at zero (need exactly one): {:?}",
                self.lambdas
            )));
        }
        // Conjugate closure.
        let match_tol = (tol * scale).max(1e-12 * scale);
        for (i, l) in self.lambdas.iter().enumerate() {
            if l.im.abs() <= match_tol {
                continue;
            }
            let partner = self
                .lambdas
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .min_by(|(_, a), (_, b)| {
                    (*a - l.conj()).norm().total_cmp(&(*b - l.conj()).norm())
                });
            match partner {
                Some((j, lj)) if (lj - l.conj()).norm() <= match_tol => {
                    let ri = self.residues[i];
                    let rj = self.residues[j];
                    if (rj - ri.conj()).norm() > match_tol.max(1e-9 * (1.0 + ri.norm())) {
                        return Err(TomoError::ConstraintInfeasible(format!(
                            "residues of conjugate modes {l} are not conjugate: {ri} vs {rj}"
                        )));
                    }
                }
                _ => {
                    return Err(TomoError::ConstraintInfeasible(format!(
                        "mode {l} has no conjugate partner"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Average a two-point tensor over equal gaps.
///
/// Translation invariance makes every entry with the same index gap an
/// estimate of the same quantity; averaging them reduces shot noise. Returns
/// the per-gap means and the number of entries behind each (used as least-
/// squares weights).
pub fn gap_averaged_samples(c2: &CorrTensor) -> TomoResult<(Vec<f64>, Vec<f64>)> {
    if c2.order() != 2 {
        return Err(TomoError::DimensionMismatch(format!(
            "gap averaging needs an order-2 tensor, got order {}",
            c2.order()
        )));
    }
    let count = c2.grid().count;
    let mut sums = vec![0.0; count];
    let mut mult = vec![0.0; count];
    for (tuple, v) in c2.entries() {
        let g = tuple[1] - tuple[0];
        sums[g] += v;
        mult[g] += 1.0;
    }
    let samples = sums
        .iter()
        .zip(&mult)
        .map(|(s, m)| s / m)
        .collect();
    Ok((samples, mult))
}

/// Matrix-pencil estimate of `num_modes` exponential modes from uniform
/// samples `f(i·step)`, `i = 0..N`.
///
/// Fails with [`TomoError::OrderTooHigh`] when the Hankel spectrum supports
/// fewer modes than requested (singular-value ratio below `1e-10`). Real
/// input data yields conjugate-symmetric mode estimates; tiny symmetry
/// violations from roundoff are repaired by averaging. Estimated rates with
/// positive real part (possible under noise) are reflected to their stable
/// mirror image.
pub fn prony_initialize(
    samples: &[f64],
    step: f64,
    num_modes: usize,
) -> TomoResult<ExpSumModel> {
    let n = samples.len();
    if num_modes == 0 {
        return Err(TomoError::DimensionMismatch(
            "cannot fit zero modes".into(),
        ));
    }
    if n < 2 * num_modes + 1 {
        return Err(TomoError::DimensionMismatch(format!(
            "{num_modes} modes need at least {} samples, got {n}",
            2 * num_modes + 1
        )));
    }
    if !(step > 0.0) {
        return Err(TomoError::GridMismatch(format!(
            "sample spacing must be positive, got {step}"
        )));
    }

    // Hankel matrix Y[i, j] = f_{i+j} with pencil parameter L ≈ N/2.
    let l = n / 2;
    let rows = n - l;
    let y = DMatrix::from_fn(rows, l + 1, |i, j| samples[i + j]);

    let svd = nalgebra::linalg::SVD::new(y, true, true);
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let sigma_max = sigma[order[0]];
    let detected_rank = order
        .iter()
        .take_while(|&&i| sigma[i] > RANK_THRESHOLD * sigma_max)
        .count();
    if detected_rank < num_modes {
        return Err(TomoError::OrderTooHigh {
            requested: num_modes,
            detected_rank,
            threshold: RANK_THRESHOLD,
        });
    }

    // Signal subspace: top singular columns of V ((L+1) × m).
    let v_t = svd.v_t.as_ref().expect("SVD was requested with v_t");
    let mut v_sig = DMatrix::zeros(l + 1, num_modes);
    for (col, &si) in order.iter().take(num_modes).enumerate() {
        for row in 0..l + 1 {
            v_sig[(row, col)] = v_t[(si, row)];
        }
    }

    // Shift-invariance pencil: rows 0..L versus rows 1..L+1; the matrix
    // mapping one onto the other has eigenvalues z_k = e^{λ_k h}.
    let v1 = v_sig.rows(0, l).into_owned();
    let v2 = v_sig.rows(1, l).into_owned();
    let gram = v1.transpose() * &v1;
    let rhs = v1.transpose() * &v2;
    let z_mat = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| TomoError::ConvergenceFailure {
            routine: "matrix-pencil mode extraction".into(),
            detail: "signal-subspace pencil is singular".into(),
        })?;
    let z_eigs = z_mat.complex_eigenvalues();

    let mut lambdas: Vec<C64> = Vec::with_capacity(num_modes);
    for z in z_eigs.iter() {
        if z.norm() < 1e-150 {
            return Err(TomoError::ConvergenceFailure {
                routine: "matrix-pencil mode extraction".into(),
                detail: format!("mode multiplier {z} is numerically zero"),
            });
        }
        let mut lam = z.ln() / step;
        if lam.im.abs() * step >= std::f64::consts::PI * (1.0 - 1e-9) {
            log::warn!(
                "mode {lam} sits at the aliasing limit |Im λ|·h = π; \
                 its oscillation frequency is ambiguous on this grid"
            );
        }
        // Reflect unstable estimates to the stable half plane.
        if lam.re > 0.0 {
            lam.re = -lam.re;
        }
        lambdas.push(lam);
    }

    symmetrize_conjugate_pairs(&mut lambdas, step);
    let residues = fit_residues(samples, step, &lambdas, None)?;
    ExpSumModel::new(lambdas, residues)
}

/// Repair roundoff-level conjugate-symmetry violations in a mode set
/// estimated from real data: pair each mode with the nearest conjugate and
/// average; zero imaginary parts below the real-mode threshold.
fn symmetrize_conjugate_pairs(lambdas: &mut [C64], step: f64) {
    let scale = lambdas
        .iter()
        .fold(1.0 / step, |a, l| a.max(l.norm()));
    let tol = REAL_MODE_TOL * scale;
    let n = lambdas.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] {
            continue;
        }
        if lambdas[i].im.abs() <= tol {
            lambdas[i].im = 0.0;
            used[i] = true;
            continue;
        }
        let target = lambdas[i].conj();
        let partner = (0..n)
            .filter(|&j| !used[j] && j != i)
            .min_by(|&a, &b| {
                (lambdas[a] - target)
                    .norm()
                    .total_cmp(&(lambdas[b] - target).norm())
            });
        if let Some(j) = partner {
            if (lambdas[j] - target).norm() <= 1e-3 * scale {
                let avg = (lambdas[i] + lambdas[j].conj()) / 2.0;
                lambdas[i] = avg;
                lambdas[j] = avg.conj();
                used[i] = true;
                used[j] = true;
                continue;
            }
        }
        // No plausible partner; leave the mode as estimated.
        used[i] = true;
    }
}

/// Linear residue fit: solve `min Σ w_i |f_i − Σ_k r_k e^{λ_k τ_i}|²` by
/// complex normal equations.
fn fit_residues(
    samples: &[f64],
    step: f64,
    lambdas: &[C64],
    weights: Option<&[f64]>,
) -> TomoResult<Vec<C64>> {
    let n = samples.len();
    let m = lambdas.len();
    let phi = CMat::from_fn(n, m, |i, k| (lambdas[k] * (i as f64 * step)).exp());
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut gram = CMat::zeros(m, m);
    let mut rhs = CVec::zeros(m);
    for i in 0..n {
        let wi = w(i);
        for a in 0..m {
            let pa = phi[(i, a)].conj() * wi;
            rhs[a] += pa * samples[i];
            for b in 0..m {
                gram[(a, b)] += pa * phi[(i, b)];
            }
        }
    }
    let sol = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| TomoError::ConvergenceFailure {
            routine: "residue fit".into(),
            detail: "normal equations are singular (degenerate modes?)".into(),
        })?;
    let mut residues: Vec<C64> = sol.iter().copied().collect();

    // Enforce exact conjugate structure on the residues of paired modes.
    let scale = lambdas.iter().fold(1.0, |a: f64, l| a.max(l.norm()));
    for i in 0..m {
        if lambdas[i].im.abs() <= REAL_MODE_TOL * scale {
            residues[i] = C64::new(residues[i].re, 0.0);
            continue;
        }
        for j in 0..m {
            if j != i && (lambdas[j] - lambdas[i].conj()).norm() <= REAL_MODE_TOL * scale {
                let avg = (residues[i] + residues[j].conj()) / 2.0;
                residues[i] = avg;
                residues[j] = avg.conj();
                break;
            }
        }
    }
    Ok(residues)
}

/// Options for [`refine_least_squares`].
#[derive(Debug, Clone)]
pub struct RefineOptions {
    /// Levenberg–Marquardt iteration cap.
    pub max_iterations: usize,
    /// Stop when an accepted step reduces the objective by less than this
    /// relative amount.
    pub rel_tolerance: f64,
    /// Snap the slowest real mode to exactly zero afterwards and re-fit the
    /// residues (the physical normalisation of correlation data).
    pub pin_dominant: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_tolerance: 1e-12,
            pin_dominant: true,
        }
    }
}

/// Result of a spectrum fit.
#[derive(Debug, Clone)]
pub struct SpectrumFit {
    pub model: ExpSumModel,
    /// Root-mean-square residual of the weighted fit.
    pub residual_rms: f64,
    /// Outer (rate) iterations used.
    pub iterations: usize,
    /// Whether the relative-decrease criterion was met.
    pub converged: bool,
    /// Whether a real mode was snapped to zero.
    pub pinned_dominant: bool,
}

/// Internal mode parametrisation for the constrained refinement.
enum ModeKind {
    /// One real rate `λ = −u²`.
    Real,
    /// A conjugate pair `λ = −u² ± i w²`.
    Pair,
}

/// Constrained separable least squares around an initial mode estimate.
///
/// The rate configuration inherits its structure (which modes are real,
/// which are conjugate pairs) from `init`; an initial model with a growing
/// mode or an unpaired complex mode is [`TomoError::ConstraintInfeasible`].
/// `weights` defaults to uniform.
pub fn refine_least_squares(
    samples: &[f64],
    step: f64,
    weights: Option<&[f64]>,
    init: &ExpSumModel,
    opts: &RefineOptions,
) -> TomoResult<SpectrumFit> {
    let n = samples.len();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(TomoError::DimensionMismatch(format!(
                "{} weights for {n} samples",
                w.len()
            )));
        }
    }
    let scale = init.lambdas.iter().fold(1.0, |a: f64, l| a.max(l.norm()));

    // Classify the initial modes into real rates and conjugate pairs.
    let mut kinds: Vec<ModeKind> = Vec::new();
    let mut theta: Vec<f64> = Vec::new();
    let mut used = vec![false; init.lambdas.len()];
    for i in 0..init.lambdas.len() {
        if used[i] {
            continue;
        }
        let l = init.lambdas[i];
        if l.re > 1e-6 * scale {
            return Err(TomoError::ConstraintInfeasible(format!(
                "initial mode {l} has positive real part"
            )));
        }
        let a = l.re.min(0.0);
        if l.im.abs() <= REAL_MODE_TOL * scale {
            kinds.push(ModeKind::Real);
            theta.push((-a).sqrt());
            used[i] = true;
        } else {
            let partner = (0..init.lambdas.len())
                .filter(|&j| !used[j] && j != i)
                .find(|&j| (init.lambdas[j] - l.conj()).norm() <= 1e-6 * scale);
            let Some(j) = partner else {
                return Err(TomoError::ConstraintInfeasible(format!(
                    "initial mode {l} has no conjugate partner"
                )));
            };
            kinds.push(ModeKind::Pair);
            theta.push((-a).sqrt());
            theta.push(l.im.abs().sqrt());
            used[i] = true;
            used[j] = true;
        }
    }

    let taus: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    let sqrt_w: Vec<f64> = (0..n)
        .map(|i| weights.map_or(1.0, |w| w[i]).sqrt())
        .collect();

    // The reduced (variable-projection) residual: solve the linear residue
    // problem for the rates described by θ, return the weighted residual
    // vector and the objective.
    let solve_inner = |theta: &[f64]| -> Option<(DVector<f64>, f64, Vec<f64>)> {
        let design = design_matrix(&kinds, theta, &taus);
        let p = design.ncols();
        let mut wd = design.clone();
        let mut wf = DVector::from_fn(n, |i, _| samples[i] * sqrt_w[i]);
        for i in 0..n {
            for j in 0..p {
                wd[(i, j)] *= sqrt_w[i];
            }
        }
        let svd = nalgebra::linalg::SVD::new(wd.clone(), true, true);
        let coef = svd.solve(&wf, 1e-13).ok()?;
        let fitted = wd * &coef;
        wf -= &fitted;
        let sse = wf.norm_squared();
        Some((wf, sse, coef.iter().copied().collect()))
    };

    solve_inner(&theta).ok_or_else(|| TomoError::ConvergenceFailure {
        routine: "mode refinement".into(),
        detail: "initial residue solve failed".into(),
    })?;

    let p = theta.len();
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let Some((r0, sse0, _)) = solve_inner(&theta) else {
            break;
        };
        // Forward-difference Jacobian of the reduced residual.
        let mut jac = DMatrix::zeros(n, p);
        let mut ok = true;
        for j in 0..p {
            let dj = 1e-6 * (1.0 + theta[j].abs());
            let mut th = theta.clone();
            th[j] += dj;
            match solve_inner(&th) {
                Some((rj, _, _)) => {
                    for i in 0..n {
                        jac[(i, j)] = (rj[i] - r0[i]) / dj;
                    }
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        let grad = jac.transpose() * &r0;
        let hess = jac.transpose() * &jac;

        // Damped step, retried with a larger damping on rejection.
        let mut accepted = false;
        for _ in 0..25 {
            let mut damped = hess.clone();
            for j in 0..p {
                damped[(j, j)] += mu * hess[(j, j)].max(1e-12);
            }
            let Some(delta) = damped.lu().solve(&(-&grad)) else {
                mu *= 4.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            match solve_inner(&trial) {
                Some((_, sse_trial, _)) if sse_trial <= sse0 => {
                    let rel_drop = (sse0 - sse_trial) / sse0.max(1e-300);
                    theta = trial;
                    mu = (mu / 3.0).max(1e-14);
                    accepted = true;
                    if rel_drop < opts.rel_tolerance {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    mu *= 4.0;
                    if mu > 1e14 {
                        break;
                    }
                }
            }
        }
        if !accepted {
            // No descent direction at any damping: the rates are at a local
            // optimum to working precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    // Assemble the refined model.
    let mut lambdas = lambdas_from_theta(&kinds, &theta);
    let mut pinned = false;
    if opts.pin_dominant {
        // Snap the slowest real mode to exactly zero.
        let slowest_real = mode_slots(&kinds)
            .filter(|(kind, _)| matches!(kind, ModeKind::Real))
            .map(|(_, slot)| slot)
            .max_by(|&a, &b| lambdas[a].re.total_cmp(&lambdas[b].re));
        if let Some(slot) = slowest_real {
            lambdas[slot] = C64::new(0.0, 0.0);
            pinned = true;
        }
    }
    let residues = fit_residues(
        samples,
        step,
        &lambdas,
        weights,
    )?;
    let model = ExpSumModel::new(lambdas, residues)?;

    // Residual of the final (possibly pinned) model.
    let mut final_sse = 0.0;
    for i in 0..n {
        let d = samples[i] - model.eval_real(taus[i]);
        final_sse += sqrt_w[i] * sqrt_w[i] * d * d;
    }

    Ok(SpectrumFit {
        model,
        residual_rms: (final_sse / n as f64).sqrt(),
        iterations,
        converged,
        pinned_dominant: pinned,
    })
}

/// Iterate `(kind, first-lambda-slot)` pairs for a kind list.
fn mode_slots(kinds: &[ModeKind]) -> impl Iterator<Item = (&ModeKind, usize)> {
    let mut slot = 0;
    kinds.iter().map(move |k| {
        let s = slot;
        slot += match k {
            ModeKind::Real => 1,
            ModeKind::Pair => 2,
        };
        (k, s)
    })
}

/// Decode the rate parameters into a mode list (pairs expanded to ±).
fn lambdas_from_theta(kinds: &[ModeKind], theta: &[f64]) -> Vec<C64> {
    let mut lambdas = Vec::new();
    let mut t = 0;
    for k in kinds {
        match k {
            ModeKind::Real => {
                lambdas.push(C64::new(-theta[t] * theta[t], 0.0));
                t += 1;
            }
            ModeKind::Pair => {
                let a = -theta[t] * theta[t];
                let b = theta[t + 1] * theta[t + 1];
                lambdas.push(C64::new(a, b));
                lambdas.push(C64::new(a, -b));
                t += 2;
            }
        }
    }
    lambdas
}

/// Real design matrix of the rate configuration: one column per real mode,
/// two per conjugate pair (cosine and sine quadratures).
fn design_matrix(kinds: &[ModeKind], theta: &[f64], taus: &[f64]) -> DMatrix<f64> {
    let n = taus.len();
    let p = kinds
        .iter()
        .map(|k| match k {
            ModeKind::Real => 1,
            ModeKind::Pair => 2,
        })
        .sum();
    let mut out = DMatrix::zeros(n, p);
    let mut t = 0;
    let mut col = 0;
    for k in kinds {
        match k {
            ModeKind::Real => {
                let a = -theta[t] * theta[t];
                for (i, tau) in taus.iter().enumerate() {
                    out[(i, col)] = (a * tau).exp();
                }
                t += 1;
                col += 1;
            }
            ModeKind::Pair => {
                let a = -theta[t] * theta[t];
                let b = theta[t + 1] * theta[t + 1];
                for (i, tau) in taus.iter().enumerate() {
                    let e = (a * tau).exp();
                    out[(i, col)] = 2.0 * e * (b * tau).cos();
                    out[(i, col + 1)] = -2.0 * e * (b * tau).sin();
                }
                t += 2;
                col += 2;
            }
        }
    }
    out
}

/// On-disk JSON form of a spectrum fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumReport {
    /// Modes as `[re, im]` pairs, canonical order.
    pub lambda: Vec<[f64; 2]>,
    /// Residues as `[re, im]` pairs, aligned with `lambda`.
    pub r: Vec<[f64; 2]>,
    /// Weighted RMS residual of the fit.
    pub residual: f64,
    /// Number of modes.
    pub m: usize,
    /// Whether the dominant mode was snapped to exactly zero.
    pub pinned_dominant: bool,
}

impl SpectrumReport {
    pub fn from_fit(fit: &SpectrumFit) -> Self {
        Self {
            lambda: fit.model.lambdas().iter().map(|l| [l.re, l.im]).collect(),
            r: fit.model.residues().iter().map(|r| [r.re, r.im]).collect(),
            residual: fit.residual_rms,
            m: fit.model.num_modes(),
            pinned_dominant: fit.pinned_dominant,
        }
    }

    pub fn to_model(&self) -> TomoResult<ExpSumModel> {
        if self.lambda.len() != self.r.len() || self.lambda.len() != self.m {
            return Err(TomoError::Parse {
                context: "spectrum report".into(),
                detail: format!(
                    "inconsistent mode counts: {} lambdas, {} residues, m = {}",
                    self.lambda.len(),
                    self.r.len(),
                    self.m
                ),
            });
        }
        ExpSumModel::new(
            self.lambda.iter().map(|p| C64::new(p[0], p[1])).collect(),
            self.r.iter().map(|p| C64::new(p[0], p[1])).collect(),
        )
    }

    pub fn save(&self, path: &std::path::Path) -> TomoResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> TomoResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Full spectrum-fitting stage: gap-average an order-2 tensor, initialise by
/// matrix pencil, refine with multiplicity weights, pin the dominant mode.
pub fn fit_spectrum(c2: &CorrTensor, num_modes: usize) -> TomoResult<SpectrumFit> {
    let (samples, mult) = gap_averaged_samples(c2)?;
    let init = prony_initialize(&samples, c2.grid().step, num_modes)?;
    let fit = refine_least_squares(
        &samples,
        c2.grid().step,
        Some(&mult),
        &init,
        &RefineOptions::default(),
    )?;
    fit.model.validate(1e-8)?;
    Ok(fit)
}

/// [`fit_spectrum`] with automatic order fallback.
///
/// Noisy two-point data routinely sustains fewer resolvable modes than the
/// state owns: measurement noise inflates the Hankel singular values past
/// the rank test, and the surplus modes come back as structurally invalid
/// artefacts (typically a non-decaying oscillatory pair). This variant
/// tries `max_modes` first and steps the order down until the refined model
/// passes structural validation, returning the fit together with the order
/// actually used. Errors only when no order down to a single mode works.
pub fn fit_spectrum_auto(c2: &CorrTensor, max_modes: usize) -> TomoResult<(SpectrumFit, usize)> {
    let mut last_err = TomoError::DimensionMismatch("requested zero modes".into());
    for m in (1..=max_modes).rev() {
        match fit_spectrum(c2, m) {
            Ok(fit) => return Ok((fit, m)),
            Err(e) => {
                log::debug!("spectrum fit with {m} modes rejected: {e}");
                last_err = e;
            }
        }
    }
    Err(last_err)
}

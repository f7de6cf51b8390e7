//! Vertex-matrix reconstruction from higher-order correlation data.
//!
//! After the decay modes `λ_k` and their order-2 residues have been fixed by
//! the spectrum fit, the remaining unknown is the vertex matrix `M` of the
//! diagonal-basis chain representation: every even-order correlator is an
//! alternating chain `e₁ᵀ M⁻¹ E(τ) ⋯ E(τ) M e₁` with mode propagators
//! `E(τ) = diag(e^{λ_k τ})` between vertices. This module fits `M` by
//! nonlinear least squares against a measured correlation tensor.
//!
//! Two structural facts make the fit cheap and well posed:
//!
//! * **Gap classes.** The model value of a tuple depends only on its gap
//!   vector, so the sum of squared residuals over all `C(n+p−1, p)` tuples
//!   collapses exactly to a sum over distinct gap vectors with precomputed
//!   per-class statistics (`Σ C_data` and `Σ C_data²`). See
//!   [`MFitProblem::new`].
//! * **Gauge fixing.** Chains of even order are invariant under
//!   `M → c·D·M·D⁻¹` for any scalar `c` and diagonal `D`, so the entry
//!   `M₀₀` carries no information and is pinned to 1. The remaining
//!   diagonal freedom leaves flat directions in the objective, which the
//!   simplex search tolerates (any point on the gauge orbit is equally
//!   good).
//!
//! The objective adds two soft anchors: a residue term `β Σ_k |M⁻¹₀ₖ Mₖ₀ −
//! r_k|²` tying the first row/column to the order-2 residues, and a sum rule
//! `γ (Σ_k M⁻¹₀ₖ Mₖ₀ − 1)²`. The sum rule is satisfied identically by any
//! invertible `M` (the sum telescopes to `(M⁻¹M)₀₀`), so the `γ` term only
//! guards against inversion roundoff; it is kept for symmetry with the
//! residue anchor.
//!
//! [`fit_m`] runs deterministic multi-start simplex minimisation
//! (one seeded stream per start, evaluated in parallel) and returns the best
//! well-conditioned minimiser.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::CorrTensor;
use crate::correlator::{check_order, ChainEvaluator};
use crate::error::{TomoError, TomoResult};
use crate::linalg::{cond_1, CMat, CVec, C64};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Condition-number cap on an accepted vertex matrix.
const MAX_M_COND: f64 = 1e10;

/// Minimum magnitude of the drawn `M₀₀` before normalising it to 1.
const MIN_PIVOT: f64 = 0.05;

/// Redraw budget for start matrices with a too-small pivot.
const DRAW_BUDGET: usize = 32;

/// Per-gap-class sufficient statistics of the data.
#[derive(Debug, Clone)]
struct GapClass {
    gaps: Vec<usize>,
    /// Number of tuples in the class.
    n: f64,
    /// Sum of data values over the class.
    s1: f64,
    /// Sum of squared data values over the class.
    s2: f64,
}

/// Reusable buffers for repeated objective evaluations.
pub struct MFitScratch {
    /// `rowvec[g·dim + k] = M⁻¹₀ₖ e^{λ_k g·step}`, rebuilt per evaluation.
    rowvec: Vec<C64>,
    stages: Vec<CVec>,
    scaled: CVec,
}

/// Precomputed least-squares problem for the vertex matrix.
pub struct MFitProblem {
    dim: usize,
    lambdas: Vec<C64>,
    r_fit: Vec<C64>,
    /// `exp_table[g][k] = e^{λ_k · g·step}`.
    exp_table: Vec<Vec<C64>>,
    /// Gap classes in lexicographic order (so consecutive classes share
    /// chain prefixes).
    classes: Vec<GapClass>,
    n_gaps: usize,
    beta: f64,
    gamma: f64,
    complex: bool,
}

impl MFitProblem {
    /// Aggregate a measured even-order tensor into gap classes and freeze
    /// the mode set. `r_fit` must be aligned with `lambdas` (same canonical
    /// order); both come from the spectrum fit.
    pub fn new(
        lambdas: &[C64],
        r_fit: &[C64],
        data: &CorrTensor,
        beta: f64,
        gamma: f64,
        complex: bool,
    ) -> TomoResult<Self> {
        check_order(data.order())?;
        if lambdas.len() != r_fit.len() {
            return Err(TomoError::DimensionMismatch(format!(
                "{} modes but {} residues",
                lambdas.len(),
                r_fit.len()
            )));
        }
        if lambdas.is_empty() {
            return Err(TomoError::DimensionMismatch(
                "need at least one mode".into(),
            ));
        }
        let grid = data.grid();
        let mut agg: std::collections::BTreeMap<Vec<usize>, (f64, f64, f64)> =
            std::collections::BTreeMap::new();
        for (tuple, v) in data.entries() {
            let gaps: Vec<usize> = tuple.windows(2).map(|w| w[1] - w[0]).collect();
            let e = agg.entry(gaps).or_insert((0.0, 0.0, 0.0));
            e.0 += 1.0;
            e.1 += v;
            e.2 += v * v;
        }
        let classes: Vec<GapClass> = agg
            .into_iter()
            .map(|(gaps, (n, s1, s2))| GapClass { gaps, n, s1, s2 })
            .collect();
        let exp_table: Vec<Vec<C64>> = (0..grid.count)
            .map(|g| {
                let tau = g as f64 * grid.step;
                lambdas.iter().map(|l| (l * tau).exp()).collect()
            })
            .collect();
        Ok(Self {
            dim: lambdas.len(),
            lambdas: lambdas.to_vec(),
            r_fit: r_fit.to_vec(),
            exp_table,
            classes,
            n_gaps: data.order() - 1,
            beta,
            gamma,
            complex,
        })
    }

    /// Number of real optimisation parameters.
    pub fn num_params(&self) -> usize {
        let free = self.dim * self.dim - 1;
        if self.complex {
            2 * free
        } else {
            free
        }
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.lambdas
    }

    /// Decode a parameter vector into a vertex matrix with `M₀₀ = 1`.
    ///
    /// Layout: the `dim²−1` free entries in row-major order skipping
    /// `(0,0)`; for a complex fit the imaginary parts follow as a second
    /// block in the same order.
    pub fn params_to_m(&self, params: &[f64]) -> CMat {
        let d = self.dim;
        let free = d * d - 1;
        let mut m = CMat::zeros(d, d);
        m[(0, 0)] = C64::new(1.0, 0.0);
        let mut slot = 0;
        for i in 0..d {
            for j in 0..d {
                if i == 0 && j == 0 {
                    continue;
                }
                let im = if self.complex { params[free + slot] } else { 0.0 };
                m[(i, j)] = C64::new(params[slot], im);
                slot += 1;
            }
        }
        m
    }

    /// Inverse of [`Self::params_to_m`]; `m` must already satisfy
    /// `M₀₀ = 1`.
    pub fn m_to_params(&self, m: &CMat) -> Vec<f64> {
        let d = self.dim;
        let mut re = Vec::with_capacity(d * d - 1);
        let mut im = Vec::with_capacity(d * d - 1);
        for i in 0..d {
            for j in 0..d {
                if i == 0 && j == 0 {
                    continue;
                }
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        if self.complex {
            re.extend(im);
        }
        re
    }

    /// Allocate reusable working buffers for [`Self::objective_scratch`].
    pub fn scratch(&self) -> MFitScratch {
        MFitScratch {
            rowvec: vec![C64::new(0.0, 0.0); self.exp_table.len() * self.dim],
            stages: vec![CVec::zeros(self.dim); self.n_gaps.saturating_sub(1)],
            scaled: CVec::zeros(self.dim),
        }
    }

    /// The least-squares objective. Singular vertex matrices map to
    /// `INFINITY` so the simplex search backs away from them.
    pub fn objective(&self, params: &[f64]) -> f64 {
        self.objective_scratch(params, &mut self.scratch())
    }

    /// Objective evaluation against caller-owned scratch buffers. This is
    /// the hot loop of the fit; apart from the matrix build and inversion
    /// it performs no allocation.
    pub fn objective_scratch(&self, params: &[f64], scratch: &mut MFitScratch) -> f64 {
        let m = self.params_to_m(params);
        let Some(minv) = m.clone().try_inverse() else {
            return f64::INFINITY;
        };
        let d = self.dim;

        // Final-gap shortcut: the last propagator followed by the M⁻¹ row
        // collapses to one cached row vector per gap.
        for (g, e) in self.exp_table.iter().enumerate() {
            for k in 0..d {
                scratch.rowvec[g * d + k] = minv[(0, k)] * e[k];
            }
        }

        // Data term, class by class. Chains over a class prefix shared with
        // the previous class are reused.
        let mut data_term = 0.0;
        let mut prev: Option<&[usize]> = None;
        for class in &self.classes {
            let shared = prev.map_or(0, |p| {
                class
                    .gaps
                    .iter()
                    .zip(p)
                    .take_while(|(a, b)| a == b)
                    .count()
            });
            // Rebuild intermediate stages from the first changed gap; only
            // gaps before the last need a full vertex application.
            for j in shared.min(self.n_gaps - 1)..self.n_gaps - 1 {
                let exp = &self.exp_table[class.gaps[j]];
                for k in 0..d {
                    let src = if j == 0 {
                        m[(k, 0)]
                    } else {
                        scratch.stages[j - 1][k]
                    };
                    scratch.scaled[k] = src * exp[k];
                }
                let op = if j % 2 == 0 { &minv } else { &m };
                op.mul_to(&scratch.scaled, &mut scratch.stages[j]);
            }
            let row = &scratch.rowvec[class.gaps[self.n_gaps - 1] * d..];
            let mut value = C64::new(0.0, 0.0);
            if self.n_gaps == 1 {
                for k in 0..d {
                    value += row[k] * m[(k, 0)];
                }
            } else {
                let tail = &scratch.stages[self.n_gaps - 2];
                for k in 0..d {
                    value += row[k] * tail[k];
                }
            }
            // Σ_tuples |V − C|² = n|V|² − 2 Re(V)·ΣC + ΣC².
            data_term += class.n * value.norm_sqr() - 2.0 * value.re * class.s1 + class.s2;
            prev = Some(&class.gaps);
        }

        // Residue anchor and sum rule.
        let mut anchor = 0.0;
        let mut r_sum = C64::new(0.0, 0.0);
        for k in 0..d {
            let r_k = minv[(0, k)] * m[(k, 0)];
            anchor += (r_k - self.r_fit[k]).norm_sqr();
            r_sum += r_k;
        }
        let total = data_term
            + self.beta * anchor
            + self.gamma * (r_sum - C64::new(1.0, 0.0)).norm_sqr();
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    /// Draw a start matrix: entries uniform on (−1, 1), redrawn while the
    /// pivot `|M₀₀|` is below threshold, then scaled so `M₀₀ = 1`.
    fn draw_start(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let d = self.dim;
        for _ in 0..DRAW_BUDGET {
            let mut m = CMat::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    let re = rng.random::<f64>() * 2.0 - 1.0;
                    let im = if self.complex {
                        rng.random::<f64>() * 2.0 - 1.0
                    } else {
                        0.0
                    };
                    m[(i, j)] = C64::new(re, im);
                }
            }
            if m[(0, 0)].norm() < MIN_PIVOT {
                continue;
            }
            let pivot = m[(0, 0)];
            m /= pivot;
            m[(0, 0)] = C64::new(1.0, 0.0);
            return Some(self.m_to_params(&m));
        }
        None
    }
}

/// Options for [`fit_m`]. The objective itself (data, anchors, real or
/// complex parametrisation) lives in [`MFitProblem`].
#[derive(Debug, Clone)]
pub struct MFitOptions {
    /// Independent random starts.
    pub n_starts: usize,
    /// Seed for the start-matrix draws (stream index = start index).
    pub seed: u64,
    /// Simplex-search settings shared by every start.
    pub nm: NelderMeadOptions,
}

impl Default for MFitOptions {
    fn default() -> Self {
        Self {
            n_starts: 100,
            seed: 0,
            nm: NelderMeadOptions::default(),
        }
    }
}

/// Outcome of a vertex-matrix fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawMFitResult", into = "RawMFitResult")]
pub struct MFitResult {
    /// Fixed decay modes the chain uses (canonical order).
    pub lambdas: Vec<C64>,
    /// Best vertex matrix found (`M₀₀ = 1`).
    pub m: CMat,
    /// Objective value at `m`.
    pub objective: f64,
    /// Which start produced the winner.
    pub start_index: usize,
    /// Number of starts that were run.
    pub n_starts: usize,
    /// Seed the starts were drawn from.
    pub seed: u64,
    /// Whether the winning start met the simplex convergence criterion.
    pub converged: bool,
}

impl MFitResult {
    /// Chain evaluator for the fitted model.
    pub fn evaluator(&self) -> TomoResult<ChainEvaluator> {
        ChainEvaluator::from_modes(self.lambdas.clone(), self.m.clone())
    }

    pub fn save(&self, path: &std::path::Path) -> TomoResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> TomoResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// On-disk JSON form of [`MFitResult`].
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMFitResult {
    /// Modes as `[re, im]` pairs.
    lambda: Vec<[f64; 2]>,
    /// Vertex-matrix dimension.
    dim: usize,
    /// Real parts, row-major.
    #[serde(rename = "M")]
    m_re: Vec<f64>,
    /// Imaginary parts, row-major; omitted for a real matrix.
    #[serde(rename = "M_im", default, skip_serializing_if = "Option::is_none")]
    m_im: Option<Vec<f64>>,
    objective: f64,
    start_index: usize,
    n_starts: usize,
    seed: u64,
    converged: bool,
}

impl From<MFitResult> for RawMFitResult {
    fn from(r: MFitResult) -> Self {
        let dim = r.m.nrows();
        let m_re: Vec<f64> = r.m.row_iter().flat_map(|row| {
            row.iter().map(|c| c.re).collect::<Vec<_>>()
        }).collect();
        let any_im = r.m.iter().any(|c| c.im != 0.0);
        let m_im = any_im.then(|| {
            r.m.row_iter()
                .flat_map(|row| row.iter().map(|c| c.im).collect::<Vec<_>>())
                .collect()
        });
        Self {
            lambda: r.lambdas.iter().map(|l| [l.re, l.im]).collect(),
            dim,
            m_re,
            m_im,
            objective: r.objective,
            start_index: r.start_index,
            n_starts: r.n_starts,
            seed: r.seed,
            converged: r.converged,
        }
    }
}

impl TryFrom<RawMFitResult> for MFitResult {
    type Error = TomoError;

    fn try_from(raw: RawMFitResult) -> TomoResult<Self> {
        let d = raw.dim;
        if raw.lambda.len() != d {
            return Err(TomoError::Parse {
                context: "vertex-fit result".into(),
                detail: format!("{} modes for dimension {d}", raw.lambda.len()),
            });
        }
        if raw.m_re.len() != d * d {
            return Err(TomoError::Parse {
                context: "vertex-fit result".into(),
                detail: format!("M has {} entries, expected {}", raw.m_re.len(), d * d),
            });
        }
        if let Some(im) = &raw.m_im {
            if im.len() != d * d {
                return Err(TomoError::Parse {
                    context: "vertex-fit result".into(),
                    detail: format!("M_im has {} entries, expected {}", im.len(), d * d),
                });
            }
        }
        let m = CMat::from_fn(d, d, |i, j| {
            let idx = i * d + j;
            C64::new(
                raw.m_re[idx],
                raw.m_im.as_ref().map_or(0.0, |v| v[idx]),
            )
        });
        Ok(Self {
            lambdas: raw.lambda.iter().map(|p| C64::new(p[0], p[1])).collect(),
            m,
            objective: raw.objective,
            start_index: raw.start_index,
            n_starts: raw.n_starts,
            seed: raw.seed,
            converged: raw.converged,
        })
    }
}

/// Multi-start vertex-matrix fit.
///
/// Starts are drawn from per-index seeded streams and minimised
/// independently (in parallel across a thread pool); the winner is the
/// lowest objective with ties broken by start index, which makes the result
/// bit-reproducible for a given seed and start count regardless of thread
/// scheduling. The winner is polished once more from a small simplex, then
/// checked for conditioning: candidates with `cond₁(M) ≥ 1e10` are rejected
/// in favour of the next-best start.
pub fn fit_m(problem: &MFitProblem, opts: &MFitOptions) -> TomoResult<MFitResult> {
    if opts.n_starts == 0 {
        return Err(TomoError::DimensionMismatch(
            "need at least one start".into(),
        ));
    }

    // A single-mode problem has no free parameters: the gauge fixes the
    // whole 1×1 vertex matrix. Return the (unique) model directly.
    if problem.num_params() == 0 {
        let m = problem.params_to_m(&[]);
        return Ok(MFitResult {
            lambdas: problem.lambdas().to_vec(),
            objective: problem.objective(&[]),
            m,
            start_index: 0,
            n_starts: opts.n_starts,
            seed: opts.seed,
            converged: true,
        });
    }

    struct Candidate {
        value: f64,
        start: usize,
        x: Vec<f64>,
        converged: bool,
    }

    let mut candidates: Vec<Candidate> = (0..opts.n_starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(s as u64);
            let Some(x0) = problem.draw_start(&mut rng) else {
                return Candidate {
                    value: f64::INFINITY,
                    start: s,
                    x: Vec::new(),
                    converged: false,
                };
            };
            let mut scratch = problem.scratch();
            let mut f = |x: &[f64]| problem.objective_scratch(x, &mut scratch);
            let res = nelder_mead(&mut f, &x0, &opts.nm);
            Candidate {
                value: res.value,
                start: s,
                x: res.x,
                converged: res.converged,
            }
        })
        .collect();
    candidates.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.start.cmp(&b.start)));

    for cand in &candidates {
        if !cand.value.is_finite() {
            break;
        }
        // Polish ladder: re-run the search from fresh, progressively
        // smaller simplices around the optimum. A fresh simplex undoes the
        // degeneration the previous run ended in, which typically gains
        // several digits.
        let mut x = cand.x.clone();
        let mut value = cand.value;
        let mut converged = cand.converged;
        let mut step = 1e-3;
        let mut scratch = problem.scratch();
        for _ in 0..3 {
            let polish_opts = NelderMeadOptions {
                initial_step: step,
                ..opts.nm.clone()
            };
            let mut f = |p: &[f64]| problem.objective_scratch(p, &mut scratch);
            let polished = nelder_mead(&mut f, &x, &polish_opts);
            if polished.value >= value {
                break;
            }
            let rel_gain = (value - polished.value) / value.max(1e-300);
            x = polished.x;
            value = polished.value;
            converged = polished.converged;
            step *= 1e-1;
            if rel_gain < 1e-6 {
                break;
            }
        }
        let m = problem.params_to_m(&x);
        let cond = cond_1(&m);
        if cond >= MAX_M_COND {
            log::warn!(
                "discarding start {} (objective {:.3e}): cond(M) = {cond:.3e}",
                cand.start,
                value
            );
            continue;
        }
        return Ok(MFitResult {
            lambdas: problem.lambdas.clone(),
            m,
            objective: value,
            start_index: cand.start,
            n_starts: opts.n_starts,
            seed: opts.seed,
            converged,
        });
    }
    Err(TomoError::ConvergenceFailure {
        routine: "vertex-matrix fit".into(),
        detail: format!(
            "no start out of {} produced a finite, well-conditioned optimum",
            opts.n_starts
        ),
    })
}

//! Random generation of admissible test states.
//!
//! Draws `(Q, R)` with i.i.d. Gaussian entries, normalises, and rejection-
//! samples until the state is numerically well-behaved: an isolated
//! stationary direction, an invertible field operator whose principal root
//! exists, a usable transfer eigenbasis, and a clear spectral gap. The
//! matrix entries can be complex, real, or real with the additional
//! condition that *every* transfer eigenvalue is real — the ensemble on
//! which a real vertex-matrix model reproduces the state exactly, since
//! complex eigenvalue pairs introduce oscillatory correlation components
//! that no real exponential mixture matches.
//!
//! After acceptance the state can be rescaled so its spectral gap hits a
//! target value: `Q → αQ`, `R → √α·R` dilates length by `1/α` and multiplies
//! every transfer eigenvalue by `α` while leaving the vertex matrix (and so
//! all equal-position correlation values) unchanged. This matches the decay
//! scale to the measurement grid so that a fixed grid resolves the decay
//! instead of sampling only its flat tail.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{TomoError, TomoResult};
use crate::linalg::{cond_1, CMat, C64};
use crate::state::CmpsState;
use crate::transfer::{m_in_diagonal_basis, normalize, spectral_decompose};

/// How the raw matrix entries are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateEnsemble {
    /// Complex Gaussian entries.
    ComplexGaussian,
    /// Real Gaussian entries (transfer spectrum still has conjugate pairs).
    RealGaussian,
    /// Real Gaussian entries, additionally conditioned on an all-real
    /// transfer spectrum.
    RealTransferSpectrum,
}

/// Tunables for [`random_state`].
#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    pub d: usize,
    pub ensemble: StateEnsemble,
    /// Rescale the accepted state so its spectral gap equals this value.
    pub target_gap: Option<f64>,
    /// Rejection-sampling budget.
    pub budget: usize,
}

impl GeneratorOptions {
    pub fn new(d: usize, ensemble: StateEnsemble) -> Self {
        Self {
            d,
            ensemble,
            target_gap: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Default rejection budget. The tightest ensemble (all-real spectrum at
/// d = 2) accepts roughly one draw in ten, so 200 draws leave the failure
/// probability negligible.
pub const DEFAULT_BUDGET: usize = 200;

/// Minimum acceptable spectral gap, in the natural units of the raw draw
/// (entries of order one).
const MIN_GAP: f64 = 0.05;

/// Maximum acceptable condition number of `R`.
const MAX_R_COND: f64 = 1e8;

/// Imaginary-part tolerance for the all-real-spectrum condition.
const REAL_SPECTRUM_TOL: f64 = 1e-9;

/// Draw one admissible normalised state.
///
/// Entries are consumed from `rng` in a fixed order (row-major `Q` then
/// row-major `R`, real part before imaginary part), so a seeded generator
/// reproduces the same state across runs. Fails with
/// [`TomoError::RejectionBudgetExhausted`] when no draw within the budget
/// satisfies all constraints.
pub fn random_state(opts: &GeneratorOptions, rng: &mut impl Rng) -> TomoResult<CmpsState> {
    if opts.d == 0 {
        return Err(TomoError::DimensionMismatch(
            "bond dimension must be at least 1".into(),
        ));
    }
    let complex = opts.ensemble == StateEnsemble::ComplexGaussian;
    // Keep matrix norms O(1) regardless of d.
    let scale = 1.0 / (opts.d as f64).sqrt();

    for _ in 0..opts.budget {
        let draw_entry = |rng: &mut dyn rand::RngCore| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
            C64::new(re * scale, im * scale)
        };
        let q = CMat::from_fn(opts.d, opts.d, |_, _| draw_entry(rng));
        let r = CMat::from_fn(opts.d, opts.d, |_, _| draw_entry(rng));
        let candidate = CmpsState::new(q, r)?;

        let Ok(normalized) = normalize(&candidate) else {
            continue;
        };
        let Ok(spectrum) = spectral_decompose(&normalized) else {
            continue;
        };
        if opts.d > 1 && !(spectrum.spectral_gap() > MIN_GAP) {
            continue;
        }
        if opts.ensemble == StateEnsemble::RealTransferSpectrum
            && !spectrum.is_real_spectrum(REAL_SPECTRUM_TOL)
        {
            continue;
        }
        if cond_1(normalized.r()) > MAX_R_COND {
            continue;
        }
        // The residue representation must be constructible (principal root
        // of R exists, basis conditioning is adequate).
        if m_in_diagonal_basis(&normalized, &spectrum).is_err() {
            continue;
        }

        let finished = match opts.target_gap {
            Some(target) if opts.d > 1 => {
                let alpha = target / spectrum.spectral_gap();
                let sqrt_alpha = alpha.sqrt();
                let q2 = normalized.q() * C64::new(alpha, 0.0);
                let r2 = normalized.r() * C64::new(sqrt_alpha, 0.0);
                // Re-polish the normalisation after rescaling roundoff.
                normalize(&CmpsState::new(q2, r2)?)?
            }
            _ => normalized,
        };
        return Ok(finished);
    }

    Err(TomoError::RejectionBudgetExhausted {
        budget: opts.budget,
        constraints: format!(
            "ensemble {:?}, d = {}, gap > {MIN_GAP}, cond(R) < {MAX_R_COND:.0e}",
            opts.ensemble, opts.d
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::build_transfer_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complex_ensemble_accepts_and_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = GeneratorOptions::new(2, StateEnsemble::ComplexGaussian);
        for _ in 0..5 {
            let s = random_state(&opts, &mut rng).unwrap();
            let spec = spectral_decompose(&s).unwrap();
            assert!(spec.eigenvalues[0].re.abs() < 1e-10);
            assert!(spec.spectral_gap() > MIN_GAP);
        }
    }

    #[test]
    fn real_ensemble_gives_real_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let opts = GeneratorOptions::new(2, StateEnsemble::RealGaussian);
        let s = random_state(&opts, &mut rng).unwrap();
        assert!(s.is_real());
    }

    #[test]
    fn real_spectrum_ensemble_has_real_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = GeneratorOptions::new(2, StateEnsemble::RealTransferSpectrum);
        for _ in 0..3 {
            let s = random_state(&opts, &mut rng).unwrap();
            assert!(s.is_real());
            let spec = spectral_decompose(&s).unwrap();
            assert!(
                spec.is_real_spectrum(REAL_SPECTRUM_TOL),
                "eigenvalues {:?}",
                spec.eigenvalues
            );
        }
    }

    #[test]
    fn gap_rescaling_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut opts = GeneratorOptions::new(2, StateEnsemble::ComplexGaussian);
        opts.target_gap = Some(0.2);
        let s = random_state(&opts, &mut rng).unwrap();
        let spec = spectral_decompose(&s).unwrap();
        assert!(
            (spec.spectral_gap() - 0.2).abs() < 1e-9,
            "gap {}",
            spec.spectral_gap()
        );
    }

    #[test]
    fn rescaling_preserves_eigenvalue_ratios() {
        // Dilation multiplies all eigenvalues by the same factor.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts_plain = GeneratorOptions::new(2, StateEnsemble::ComplexGaussian);
        let s1 = random_state(&opts_plain, &mut rng).unwrap();
        let spec1 = spectral_decompose(&s1).unwrap();

        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let mut opts_scaled = opts_plain.clone();
        opts_scaled.target_gap = Some(0.37);
        let s2 = random_state(&opts_scaled, &mut rng2).unwrap();
        let spec2 = spectral_decompose(&s2).unwrap();

        let alpha = 0.37 / spec1.spectral_gap();
        for (a, b) in spec1.eigenvalues.iter().zip(&spec2.eigenvalues) {
            assert!(
                (a * alpha - b).norm() < 1e-8 * (1.0 + b.norm()),
                "eigenvalue {a} scaled by {alpha} should be {b}"
            );
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let opts = GeneratorOptions::new(3, StateEnsemble::ComplexGaussian);
        let a = random_state(&opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_state(&opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let ta = build_transfer_matrix(&a);
        let tb = build_transfer_matrix(&b);
        for (x, y) in ta.iter().zip(tb.iter()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn d_one_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let opts = GeneratorOptions::new(1, StateEnsemble::ComplexGaussian);
        let s = random_state(&opts, &mut rng).unwrap();
        assert_eq!(s.d(), 1);
    }
}

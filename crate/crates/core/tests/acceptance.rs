//! Acceptance checks for the reconstruction toolkit.
//!
//! Each test covers one headline requirement end to end and prints a single
//! `ACCEPTANCE <name>: PASS/FAIL (<details>)` line; run with
//! `cargo test --test acceptance -- --nocapture` to see every line. The
//! checks are deliberately self-contained: each builds its own ground truth
//! so that a failure localises to the subsystem under test.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use cmps_tomo::corr::{relative_deviation, CorrTensor};
use cmps_tomo::correlator::{
    eval_correlator_diagonal, eval_correlator_direct, ChainEvaluator,
};
use cmps_tomo::ensemble::{random_state, GeneratorOptions, StateEnsemble};
use cmps_tomo::grid::Grid;
use cmps_tomo::linalg::{C64, CMat};
use cmps_tomo::mfit::{fit_m, MFitOptions, MFitProblem};
use cmps_tomo::predict::{render_labeled_reports, validation_report};
use cmps_tomo::shots::ShotEnsemble;
use cmps_tomo::shotsim::{generate_shots, PhaseKernel, ShotSimConfig};
use cmps_tomo::specfit::{
    fit_spectrum_auto, prony_initialize, refine_least_squares, RefineOptions,
};
use cmps_tomo::transfer::{m_in_diagonal_basis, spectral_decompose, ResidueTensor};

/// Print the one-line verdict and fail the test if the criterion is not met.
fn verdict(name: &str, pass: bool, details: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {name}: {word} ({details})");
    assert!(pass, "{name}: {details}");
}

fn real_spectrum_state_tensors(
    seed: u64,
    grid: Grid,
) -> (ResidueTensor, CorrTensor, CorrTensor, CorrTensor) {
    let gen = GeneratorOptions::new(2, StateEnsemble::RealTransferSpectrum);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = random_state(&gen, &mut rng).expect("state generation");
    let spec = spectral_decompose(&state).expect("transfer spectrum");
    let rt = m_in_diagonal_basis(&state, &spec).expect("diagonal-basis chain");
    let truth = ChainEvaluator::from_residue_tensor(&rt);
    let (c2, _) = truth.fill_simplex(2, grid).expect("exact order-2 tensor");
    let (c4, _) = truth.fill_simplex(4, grid).expect("exact order-4 tensor");
    let (c6, _) = truth.fill_simplex(6, grid).expect("exact order-6 tensor");
    (rt, c2, c4, c6)
}

/// Two independent evaluation paths agree on random states: matrix
/// exponentials between vertices versus the diagonal-basis residue chain.
#[test]
fn oracle_equivalence_across_dimensions_and_orders() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut comparisons = 0usize;
    for i in 0..100usize {
        let d = 1 + i % 3;
        let opts = GeneratorOptions::new(d, StateEnsemble::ComplexGaussian);
        let state = random_state(&opts, &mut rng).expect("state generation");
        let spec = spectral_decompose(&state).expect("transfer spectrum");
        let rt = m_in_diagonal_basis(&state, &spec).expect("diagonal basis");
        for order in [2usize, 4, 6] {
            let gaps: Vec<f64> = (0..order - 1)
                .map(|_| 0.05 + 1.1 * rng.random::<f64>())
                .collect();
            let mut positions = vec![0.0f64];
            for &g in &gaps {
                positions.push(positions.last().unwrap() + g);
            }
            let a = eval_correlator_direct(&state, &positions).expect("direct value");
            let b = eval_correlator_diagonal(&rt, &gaps).expect("diagonal value");
            let rel = (a - b).norm() / a.norm().max(1e-12);
            worst = worst.max(rel);
            comparisons += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "oracle equivalence",
        worst < 1e-9 && secs < 60.0,
        &format!(
            "{comparisons} comparisons over d in {{1,2,3}}, orders {{2,4,6}}; \
             worst relative difference {worst:.3e} (limit 1e-9); {secs:.1} s (limit 60 s)"
        ),
    );
}

/// Full tomography loop on exact data: decay modes from the two-point
/// function, vertex matrix from the four-point function, six-point
/// prediction checked against the generating state.
#[test]
fn closed_loop_noiseless_reconstruction() {
    let start = Instant::now();
    let grid = Grid::new(0.0, 0.35, 30).unwrap();
    let (rt, c2, c4, c6_truth) = real_spectrum_state_tensors(42, grid);

    let (sfit, modes_used) = fit_spectrum_auto(&c2, 4).expect("spectrum fit");
    let mut lambda_err: f64 = 0.0;
    let mut lambda_pairs = 0usize;
    if modes_used == rt.lambdas.len() {
        // The dominant mode sits at zero by normalization (up to the
        // normalization residual ~1e-14), so its recovery is measured
        // against the spectral scale rather than its own magnitude.
        let scale = rt.lambdas.iter().map(|l| l.norm()).fold(0.0f64, f64::max);
        for (hat, truth) in sfit.model.lambdas().iter().zip(&rt.lambdas) {
            let denom = truth.norm().max(1e-2 * scale);
            lambda_err = lambda_err.max((hat - truth).norm() / denom);
            lambda_pairs += 1;
        }
    } else {
        lambda_err = f64::INFINITY;
    }

    let problem = MFitProblem::new(
        sfit.model.lambdas(),
        sfit.model.residues(),
        &c4,
        1.0,
        1.0,
        false,
    )
    .expect("vertex problem");
    let opts = MFitOptions {
        n_starts: 100,
        seed: 0,
        ..MFitOptions::default()
    };
    let fit = fit_m(&problem, &opts).expect("vertex fit");
    let eval = fit.evaluator().expect("fitted evaluator");
    let (c6_pred, _) = eval.fill_simplex(6, grid).expect("six-point prediction");
    let dev = relative_deviation(&c6_truth, &c6_pred).expect("deviation metric");

    let secs = start.elapsed().as_secs_f64();
    verdict(
        "closed-loop noiseless",
        lambda_err < 1e-5 && dev.mean < 1e-4 && secs < 600.0,
        &format!(
            "{lambda_pairs}/{} decay modes matched, worst relative error {lambda_err:.3e} \
             (limit 1e-5); C6 mean relative deviation {:.3e} over {} entries (limit 1e-4); \
             100 starts, {secs:.0} s (limit 600 s)",
            rt.lambdas.len(),
            dev.mean,
            dev.used
        ),
    );
}

/// Reconstruction error tracks the measurement noise: fitting on tensors
/// carrying 1% additive Gaussian noise, the deviation of the model from the
/// measured order-4 and order-6 tensors stays at the percent scale — the
/// fit cannot beat its own measurement noise (a dip below the band would
/// mean the model interpolates noise) and does not amplify it
/// catastrophically either.
#[test]
fn noise_scaling_over_twenty_seeds() {
    let start = Instant::now();
    let grid = Grid::new(0.0, 0.35, 30).unwrap();
    let sigma = 0.01;
    let mut eps4 = Vec::with_capacity(20);
    let mut eps6 = Vec::with_capacity(20);

    for seed in 1..=20u64 {
        let (_, c2, c4, c6_truth) = real_spectrum_state_tensors(seed, grid);
        let mut c2n = c2.clone();
        let mut c4n = c4.clone();
        let mut c6n = c6_truth.clone();
        for (tensor, stream) in [
            (&mut c2n, 1002u64),
            (&mut c4n, 1004u64),
            (&mut c6n, 1006u64),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let noise = rand_distr::Normal::new(0.0, sigma).unwrap();
            for v in tensor.values_mut() {
                *v += noise.sample(&mut rng);
            }
        }

        let (sfit, modes_used) = fit_spectrum_auto(&c2n, 4).expect("noisy spectrum fit");
        let problem = MFitProblem::new(
            sfit.model.lambdas(),
            sfit.model.residues(),
            &c4n,
            1.0,
            1.0,
            false,
        )
        .expect("vertex problem");
        let opts = MFitOptions {
            n_starts: 40,
            seed: 0,
            ..MFitOptions::default()
        };
        let fit = fit_m(&problem, &opts).expect("vertex fit");
        let eval = fit.evaluator().expect("fitted evaluator");
        let (p4, _) = eval.fill_simplex(4, grid).unwrap();
        let (p6, _) = eval.fill_simplex(6, grid).unwrap();
        // The deviation is scored against the measured (noisy) tensors —
        // the only reference an experiment has — so the residual bottoms
        // out at the injected noise level instead of averaging it away.
        let e4 = relative_deviation(&c4n, &p4).unwrap().mean;
        let e6 = relative_deviation(&c6n, &p6).unwrap().mean;
        println!(
            "  seed {seed:2}: {modes_used} modes kept, eps4 {e4:.4e}, eps6 {e6:.4e}"
        );
        eps4.push(e4);
        eps6.push(e6);
    }

    let median = |xs: &mut Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        0.5 * (xs[9] + xs[10])
    };
    let m4 = median(&mut eps4);
    let m6 = median(&mut eps6);
    let in_band = |m: f64| (0.003..=0.05).contains(&m);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "noise scaling",
        in_band(m4) && in_band(m6) && secs < 7200.0,
        &format!(
            "1% noise, 20 seeds: median eps4 {m4:.4e}, median eps6 {m6:.4e} \
             (band [3e-3, 5e-2]); {secs:.0} s (limit 7200 s)"
        ),
    );
}

/// Per-shot global phase offsets: even-order estimates are bit-identical
/// under exactly representable offsets, and odd-order raw averages collapse
/// once the offset spread is large.
#[test]
fn global_phase_offsets_cancel_only_in_even_orders() {
    let start = Instant::now();
    let grid = Grid::new(0.0, 0.4, 6).unwrap();
    let base_cfg = ShotSimConfig {
        kernel: PhaseKernel::Exponential {
            variance: 0.4,
            corr_length: 1.0,
        },
        global_phase_spread: 0.0,
        shots: 10_000,
        seed: 5,
    };
    let base = generate_shots(&grid, &base_cfg).expect("shot simulation");

    // Quantise phases to a 2^-26 grid and offsets to a 2^-6 grid so that
    // every offset addition is exact in binary floating point; only then is
    // bitwise cancellation a well-posed requirement.
    let quantum = (1u64 << 26) as f64;
    let phases: Vec<Vec<f64>> = base
        .phases()
        .iter()
        .map(|row| row.iter().map(|p| (p * quantum).round() / quantum).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let shifted: Vec<Vec<f64>> = phases
        .iter()
        .map(|row| {
            let offset = ((rng.random::<f64>() - 0.5) * 17.0 * 64.0).round() / 64.0;
            row.iter().map(|p| p + offset).collect()
        })
        .collect();
    let plain = ShotEnsemble::new(grid, phases).unwrap();
    let offsetted = ShotEnsemble::new(grid, shifted).unwrap();

    let mut bitwise_even = true;
    for order in [2usize, 4, 6] {
        let a = plain.estimate_correlator(order).unwrap();
        let b = offsetted.estimate_correlator(order).unwrap();
        let same = a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        bitwise_even &= same;
    }

    let spread_cfg = ShotSimConfig {
        global_phase_spread: 5.0,
        ..base_cfg
    };
    let spread = generate_shots(&grid, &spread_cfg).expect("shot simulation");
    let max_norm = |v: &[C64]| v.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let raw_plain = max_norm(&base.raw_phase_average(3).unwrap());
    let raw_spread = max_norm(&spread.raw_phase_average(3).unwrap());
    let shrink = raw_plain / raw_spread.max(1e-300);

    let secs = start.elapsed().as_secs_f64();
    verdict(
        "global-offset cancellation",
        bitwise_even && shrink > 5.0 && secs < 60.0,
        &format!(
            "even orders 2/4/6 bit-identical under offsets: {bitwise_even}; \
             odd raw average shrinks {shrink:.1}x at 5 rad spread (limit 5x); \
             10000 shots, {secs:.1} s (limit 60 s)"
        ),
    );
}

/// The deviation metric reproduces hand-computed values on three-entry
/// fixtures, and the labelled comparison table renders one row per dataset.
#[test]
fn deviation_metric_and_report_layout() {
    // Three entries on a two-point grid. Reconstruction is identically one,
    // so each deviation is just |measured - 1|.
    let grid = Grid::new(0.0, 1.0, 2).unwrap();
    let recon = CorrTensor::from_fn(2, grid, |_| 1.0);

    // Dyadic fixture: deviations {0, 0.25, 0.5} are exact in binary, so the
    // metric must match the hand result bit for bit.
    let measured = CorrTensor::from_values(2, grid, vec![1.0, 1.25, 0.5]).unwrap();
    let report = relative_deviation(&measured, &recon).unwrap();
    let dyadic_exact = report.mean == 0.25 && report.max == 0.5 && report.used == 3;

    // Decimal fixture: mean 0.1, max 0.2. The hand computation is the same
    // floating-point expression, so equality is again exact.
    let measured = CorrTensor::from_values(2, grid, vec![1.0, 1.1, 0.8]).unwrap();
    let report = relative_deviation(&measured, &recon).unwrap();
    let d2 = (1.1f64 - 1.0).abs();
    let d3 = (0.8f64 - 1.0).abs();
    let hand_mean = (0.0 + d2 + d3) / 3.0;
    let decimal_exact = report.mean == hand_mean
        && report.max == d3
        && (report.mean - 0.1).abs() < 1e-15
        && (report.max - 0.2).abs() < 1e-15;

    // Three labelled synthetic datasets scored against one model, rendered
    // as one table row each.
    let lambdas = vec![C64::new(0.0, 0.0), C64::new(-0.8, 0.0)];
    let m = CMat::from_row_slice(2, 2, &[
        C64::new(1.0, 0.0),
        C64::new(0.4, 0.0),
        C64::new(-0.3, 0.0),
        C64::new(0.9, 0.0),
    ]);
    let eval = ChainEvaluator::from_modes(lambdas, m).unwrap();
    let data_grid = Grid::new(0.0, 0.5, 5).unwrap();
    let mut rows = Vec::new();
    for (label, scale) in [("hold 5 ms", 1.0), ("hold 15 ms", 1.01), ("hold 25 ms", 1.05)] {
        let mut tensors = Vec::new();
        for order in [2usize, 4] {
            let (mut t, _) = eval.fill_simplex(order, data_grid).unwrap();
            for v in t.values_mut() {
                *v *= scale;
            }
            tensors.push(t);
        }
        let report = validation_report(&eval, &tensors).unwrap();
        rows.push((label.to_string(), report));
    }
    let table = render_labeled_reports(&rows);
    let lines: Vec<&str> = table.lines().collect();
    let layout_ok = lines.len() == 4
        && lines[0].contains("mean dev C2")
        && lines[0].contains("mean dev C4")
        && lines[1].contains("hold 5 ms")
        && lines[2].contains("hold 15 ms")
        && lines[3].contains("hold 25 ms");

    verdict(
        "deviation metric",
        dyadic_exact && decimal_exact && layout_ok,
        &format!(
            "dyadic fixture exact: {dyadic_exact}; mean-0.1/max-0.2 fixture exact: \
             {decimal_exact}; three-row labelled table renders: {layout_ok}"
        ),
    );
}

/// The exponential-sum fitter recovers a known two-mode decay exactly and
/// is consistent under a shift of the sampling origin.
#[test]
fn exponential_fit_recovers_known_modes() {
    let step = 0.1;
    let n = 101;
    let f = |t: f64| 0.6 * (-0.5 * t).exp() + 0.4 * (-2.0 * t).exp();
    let no_pin = RefineOptions {
        pin_dominant: false,
        ..RefineOptions::default()
    };

    let samples: Vec<f64> = (0..n).map(|k| f(k as f64 * step)).collect();
    let init = prony_initialize(&samples, step, 2).expect("pencil initialisation");
    let fit = refine_least_squares(&samples, step, None, &init, &no_pin).expect("refinement");
    let lam = fit.model.lambdas();
    let res = fit.model.residues();
    let base_err = (lam[0] - C64::new(-0.5, 0.0))
        .norm()
        .max((lam[1] - C64::new(-2.0, 0.0)).norm())
        .max((res[0] - C64::new(0.6, 0.0)).norm())
        .max((res[1] - C64::new(0.4, 0.0)).norm());

    // Shift the sampling origin: rates must be unchanged, residues pick up
    // the factor e^{lambda a}.
    let a = 0.3;
    let shifted: Vec<f64> = (0..n).map(|k| f(a + k as f64 * step)).collect();
    let init = prony_initialize(&shifted, step, 2).expect("pencil initialisation");
    let fit_s = refine_least_squares(&shifted, step, None, &init, &no_pin).expect("refinement");
    let lam_s = fit_s.model.lambdas();
    let res_s = fit_s.model.residues();
    let shift_err = (lam_s[0] - C64::new(-0.5, 0.0))
        .norm()
        .max((lam_s[1] - C64::new(-2.0, 0.0)).norm())
        .max((res_s[0] - C64::new(0.6 * (-0.5f64 * a).exp(), 0.0)).norm())
        .max((res_s[1] - C64::new(0.4 * (-2.0f64 * a).exp(), 0.0)).norm());

    verdict(
        "exponential-fit exactness",
        base_err < 1e-8 && shift_err < 1e-6,
        &format!(
            "unshifted recovery error {base_err:.3e} (limit 1e-8); \
             origin-shifted (a=0.3) error {shift_err:.3e} (limit 1e-6)"
        ),
    );
}

/// The fitted quantities are gauge covariants: rescaling and diagonally
/// conjugating the vertex matrix changes neither the fitting objective nor
/// any correlation value nor the order-2 residues.
#[test]
fn gauge_transformations_leave_observables_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let grid = Grid::new(0.0, 0.4, 8).unwrap();
    let mut worst_obj: f64 = 0.0;
    let mut worst_val: f64 = 0.0;
    let mut worst_res: f64 = 0.0;

    for _ in 0..20 {
        let gen = GeneratorOptions::new(2, StateEnsemble::RealTransferSpectrum);
        let state = random_state(&gen, &mut rng).expect("state generation");
        let spec = spectral_decompose(&state).expect("transfer spectrum");
        let rt = m_in_diagonal_basis(&state, &spec).expect("diagonal basis");
        let dim = rt.m.nrows();

        // Gauge-fixed truth plus a generic off-truth test matrix: the
        // invariance must hold for the objective *function*, not only at
        // its minimum (where both sides would be trivially ~0). The offset
        // is substantial on purpose — near the minimum the objective's
        // relative sensitivity to the last-digit jitter of the chain values
        // diverges, which would test floating-point luck, not gauge theory.
        let mut m_test = rt.m.clone() / rt.m[(0, 0)];
        for i in 0..dim {
            for j in 0..dim {
                if (i, j) != (0, 0) {
                    m_test[(i, j)] +=
                        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                }
            }
        }
        m_test[(0, 0)] = C64::new(1.0, 0.0);

        // Random scalar and diagonal similarity, renormalised back into the
        // fixed gauge (the scalar sits in the (0,0) entry). Magnitudes stay
        // within [3/4, 4/3]: the invariance is an identity, but chains of
        // length five amplify the floating-point error of wilder gauges
        // beyond the 1e-12 certification threshold.
        let random_factor = |rng: &mut ChaCha8Rng| {
            C64::from_polar(
                (4.0f64 / 3.0).powf(2.0 * rng.random::<f64>() - 1.0),
                std::f64::consts::TAU * rng.random::<f64>(),
            )
        };
        let c = random_factor(&mut rng);
        let d: Vec<C64> = (0..dim).map(|_| random_factor(&mut rng)).collect();
        let mut m_gauged = CMat::from_fn(dim, dim, |i, j| c * d[i] * m_test[(i, j)] / d[j]);
        m_gauged /= m_gauged[(0, 0)];

        let truth = ChainEvaluator::from_residue_tensor(&rt);
        let (c4, _) = truth.fill_simplex(4, grid).unwrap();
        let r2 = rt.residues_order2();
        let problem = MFitProblem::new(&rt.lambdas, &r2, &c4, 1.0, 1.0, true)
            .expect("vertex problem");
        let oa = problem.objective(&problem.m_to_params(&m_test));
        let ob = problem.objective(&problem.m_to_params(&m_gauged));
        worst_obj = worst_obj.max((oa - ob).abs() / oa.abs().max(1e-12));

        let eval_a = ChainEvaluator::from_modes(rt.lambdas.clone(), m_test.clone()).unwrap();
        let eval_b = ChainEvaluator::from_modes(rt.lambdas.clone(), m_gauged.clone()).unwrap();
        for order in [2usize, 4, 6] {
            for _ in 0..5 {
                let gaps: Vec<f64> = (0..order - 1)
                    .map(|_| 0.1 + 1.0 * rng.random::<f64>())
                    .collect();
                let va = eval_a.eval_gaps(&gaps).unwrap();
                let vb = eval_b.eval_gaps(&gaps).unwrap();
                worst_val = worst_val.max((va - vb).norm() / va.norm().max(1e-12));
            }
        }

        let rt_a = ResidueTensor {
            minv: m_test.clone().try_inverse().expect("test matrix invertible"),
            m: m_test,
            lambdas: rt.lambdas.clone(),
        };
        let rt_b = ResidueTensor {
            minv: m_gauged
                .clone()
                .try_inverse()
                .expect("gauged matrix invertible"),
            m: m_gauged,
            lambdas: rt.lambdas.clone(),
        };
        for (x, y) in rt_a
            .residues_order2()
            .iter()
            .zip(&rt_b.residues_order2())
        {
            worst_res = worst_res.max((x - y).norm());
        }
    }

    verdict(
        "gauge invariance",
        worst_obj < 1e-12 && worst_val < 1e-12 && worst_res < 1e-12,
        &format!(
            "20 instances: objective relative change {worst_obj:.3e}, correlation value \
             relative change {worst_val:.3e}, order-2 residue change {worst_res:.3e} \
             (limits 1e-12)"
        ),
    );
}

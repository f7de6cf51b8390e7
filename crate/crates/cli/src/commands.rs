//! Subcommand implementations.
//!
//! Every command resolves its parameters from flags plus an optional JSON
//! config file (flags override; unknown config keys are rejected), runs the
//! corresponding library routines, and writes results to files. Human
//! tables go to standard output; progress goes to the logger on standard
//! error.

use std::path::{Path, PathBuf};

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use cmps_tomo::corr::CorrTensor;
use cmps_tomo::correlator::{check_order, ChainEvaluator};
use cmps_tomo::ensemble::{random_state, GeneratorOptions, StateEnsemble};
use cmps_tomo::grid::Grid;
use cmps_tomo::mfit::{MFitOptions, MFitProblem, MFitResult};
use cmps_tomo::optim::NelderMeadOptions;
use cmps_tomo::predict::{projection_slice, render_report, validation_report};
use cmps_tomo::shots::ShotEnsemble;
use cmps_tomo::shotsim::{generate_shots, PhaseKernel, ShotSimConfig};
use cmps_tomo::specfit::{
    fit_spectrum_auto, gap_averaged_samples, prony_initialize, refine_least_squares,
    RefineOptions, SpectrumFit, SpectrumReport,
};
use cmps_tomo::transfer::{m_in_diagonal_basis, spectral_decompose};
use cmps_tomo::TomoError;

use crate::CliError;

type CliResult<T = ()> = Result<T, CliError>;

/// Imaginary residues above this trigger a warning when predicting.
const IMAG_WARN: f64 = 1e-8;

/// Attach the file path to I/O errors bubbling out of load/save helpers,
/// which otherwise report only the OS message.
fn with_path<T>(result: Result<T, TomoError>, path: &Path) -> CliResult<T> {
    result.map_err(|e| match e {
        TomoError::Io(ioe) => CliError::Tomo(TomoError::Io(std::io::Error::new(
            ioe.kind(),
            format!("{}: {ioe}", path.display()),
        ))),
        other => CliError::Tomo(other),
    })
}

fn parse_grid(spec: &str) -> CliResult<Grid> {
    spec.parse()
        .map_err(|e: TomoError| CliError::Config(format!("invalid grid spec `{spec}`: {e}")))
}

fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

fn require<T>(value: Option<T>, name: &str) -> CliResult<T> {
    value.ok_or_else(|| {
        CliError::Config(format!(
            "missing required parameter `{name}` (set a flag or a config entry)"
        ))
    })
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Tomo(TomoError::Io(e)))?;
    Ok(())
}

fn parse_ensemble(name: &str) -> CliResult<StateEnsemble> {
    match name {
        "complex" => Ok(StateEnsemble::ComplexGaussian),
        "real" => Ok(StateEnsemble::RealGaussian),
        "real-spectrum" => Ok(StateEnsemble::RealTransferSpectrum),
        other => Err(CliError::Config(format!(
            "unknown ensemble `{other}` (complex | real | real-spectrum)"
        ))),
    }
}

/// Gate orders above 6: the simplex grows steeply with order, so the cost
/// must be opted into explicitly.
fn check_predictable_order(order: usize, high_orders: bool) -> CliResult<()> {
    check_order(order)?;
    if order > 6 && !high_orders {
        return Err(CliError::Config(format!(
            "order {order} predictions are gated behind --high-orders (simplex size grows steeply)"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

#[derive(Args)]
pub struct GenerateArgs {
    /// JSON config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bond dimension of the generated state.
    #[arg(long)]
    d: Option<usize>,
    /// Measurement grid as start:step:count.
    #[arg(long)]
    grid: Option<String>,
    /// Seed for the state draw and the noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Additive Gaussian noise level on the written tensors (0 = exact).
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// State ensemble: complex | real | real-spectrum.
    #[arg(long)]
    ensemble: Option<String>,
    /// Rescale the state so the transfer spectral gap equals this value.
    #[arg(long)]
    target_gap: Option<f64>,
    /// Correlator orders to emit (comma-separated, even).
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Directory receiving state.json and c{order}.csv files.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    d: Option<usize>,
    grid: Option<String>,
    seed: Option<u64>,
    noise_sigma: Option<f64>,
    ensemble: Option<String>,
    target_gap: Option<f64>,
    orders: Option<Vec<usize>>,
    output_dir: Option<PathBuf>,
}

pub fn generate(args: GenerateArgs) -> CliResult {
    let cfg: GenerateConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => GenerateConfig::default(),
    };
    let d = require(args.d.or(cfg.d), "d")?;
    let grid_spec = require(args.grid.or(cfg.grid), "grid")?;
    let grid = parse_grid(&grid_spec)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let noise = args.noise_sigma.or(cfg.noise_sigma).unwrap_or(0.0);
    if !(noise >= 0.0) {
        return Err(CliError::Config(format!(
            "noise sigma must be non-negative, got {noise}"
        )));
    }
    let ensemble_name = args
        .ensemble
        .or(cfg.ensemble)
        .unwrap_or_else(|| "complex".to_string());
    let ensemble = parse_ensemble(&ensemble_name)?;
    let target_gap = args.target_gap.or(cfg.target_gap);
    let orders = args.orders.or(cfg.orders).unwrap_or_else(|| vec![2, 4, 6]);
    for &order in &orders {
        check_order(order)?;
    }
    let out = require(args.output_dir.or(cfg.output_dir), "output-dir")?;
    ensure_dir(&out)?;

    let mut gen_opts = GeneratorOptions::new(d, ensemble);
    gen_opts.target_gap = target_gap;
    gen_opts.budget = 100;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = random_state(&gen_opts, &mut rng)?;
    let state_path = out.join("state.json");
    with_path(state.save(&state_path), &state_path)?;

    let spec = spectral_decompose(&state)?;
    let rt = m_in_diagonal_basis(&state, &spec)?;
    let eval = ChainEvaluator::from_residue_tensor(&rt);
    for &order in &orders {
        let (mut tensor, max_imag) = eval.fill_simplex(order, grid)?;
        if max_imag > IMAG_WARN {
            log::warn!("order {order}: imaginary residue {max_imag:.3e} in exact evaluation");
        }
        if noise > 0.0 {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
            noise_rng.set_stream(1000 + order as u64);
            let dist = rand_distr::Normal::new(0.0, noise)
                .map_err(|e| CliError::Config(format!("invalid noise sigma: {e}")))?;
            for v in tensor.values_mut() {
                *v += dist.sample(&mut noise_rng);
            }
            let n = tensor.len();
            tensor.set_stderr(vec![noise; n])?;
        }
        let path = out.join(format!("c{order}.csv"));
        with_path(tensor.write_csv(&path), &path)?;
        log::info!("wrote order-{order} tensor ({} entries)", tensor.len());
    }

    let resolved = serde_json::json!({
        "d": d,
        "grid": grid_spec,
        "seed": seed,
        "noise_sigma": noise,
        "ensemble": ensemble_name,
        "target_gap": target_gap,
        "orders": orders,
        "output_dir": out,
    });
    std::fs::write(
        out.join("run_config.json"),
        serde_json::to_string_pretty(&resolved).map_err(TomoError::from)?,
    )
    .map_err(TomoError::from)?;
    log::info!("generated d={d} state into {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate-shots

#[derive(Args)]
pub struct SimulateShotsArgs {
    /// JSON config with the full shot-simulation model (kernel, spread,
    /// shots, seed); flags override individual entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurement grid as start:step:count.
    #[arg(long)]
    grid: Option<String>,
    /// Number of shots to draw.
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Standard deviation of the per-shot global phase offset.
    #[arg(long)]
    spread: Option<f64>,
    /// Exponential-kernel field variance (with --corr-length, replaces the
    /// config kernel).
    #[arg(long)]
    variance: Option<f64>,
    /// Exponential-kernel correlation length.
    #[arg(long)]
    corr_length: Option<f64>,
    /// Output CSV for the shot ensemble.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn simulate_shots(args: SimulateShotsArgs) -> CliResult {
    let grid = parse_grid(&require(args.grid, "grid")?)?;
    let output = require(args.output, "output")?;

    let mut sim: Option<ShotSimConfig> = match &args.config {
        Some(p) => Some(load_config(p)?),
        None => None,
    };
    if args.variance.is_some() || args.corr_length.is_some() {
        let (Some(variance), Some(corr_length)) = (args.variance, args.corr_length) else {
            return Err(CliError::Config(
                "--variance and --corr-length must be given together".into(),
            ));
        };
        let base = sim.take();
        sim = Some(ShotSimConfig {
            kernel: PhaseKernel::Exponential {
                variance,
                corr_length,
            },
            global_phase_spread: base.as_ref().map_or(0.0, |c| c.global_phase_spread),
            shots: base.as_ref().map_or(0, |c| c.shots),
            seed: base.as_ref().map_or(0, |c| c.seed),
        });
    }
    let Some(mut sim) = sim else {
        return Err(CliError::Config(
            "provide --config or an exponential kernel via --variance/--corr-length".into(),
        ));
    };
    if let Some(shots) = args.shots {
        sim.shots = shots;
    }
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    if let Some(spread) = args.spread {
        sim.global_phase_spread = spread;
    }
    if sim.shots == 0 {
        return Err(CliError::Config("shot count must be positive".into()));
    }

    let ensemble = generate_shots(&grid, &sim)?;
    with_path(ensemble.write_csv(&output), &output)?;
    log::info!(
        "wrote {} shots on {} grid points to {}",
        ensemble.num_shots(),
        grid.count,
        output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Args)]
pub struct EstimateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shot-ensemble CSV produced by simulate-shots (or compatible).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Correlator order (even).
    #[arg(long)]
    order: Option<usize>,
    /// Output CSV for the estimated tensor.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateConfig {
    input: Option<PathBuf>,
    order: Option<usize>,
    output: Option<PathBuf>,
}

pub fn estimate(args: EstimateArgs) -> CliResult {
    let cfg: EstimateConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => EstimateConfig::default(),
    };
    let input = require(args.input.or(cfg.input), "input")?;
    let order = require(args.order.or(cfg.order), "order")?;
    let output = require(args.output.or(cfg.output), "output")?;

    let ensemble = with_path(ShotEnsemble::read_csv(&input), &input)?;
    let tensor = ensemble.estimate_correlator(order)?;
    with_path(tensor.write_csv(&output), &output)?;
    log::info!(
        "estimated order-{order} tensor from {} shots ({} entries)",
        ensemble.num_shots(),
        tensor.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-spectrum

#[derive(Args)]
pub struct FitSpectrumArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Two-point tensor CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of decay modes to fit.
    #[arg(long)]
    num_modes: Option<usize>,
    /// Output JSON for the fitted spectrum.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Skip snapping the slowest mode to zero.
    #[arg(long)]
    no_pin: bool,
    /// Treat --num-modes as an upper bound and reduce the order until the
    /// model passes structural validation (recommended on noisy data).
    #[arg(long)]
    auto: bool,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSpectrumConfig {
    input: Option<PathBuf>,
    num_modes: Option<usize>,
    output: Option<PathBuf>,
    pin: Option<bool>,
    auto: Option<bool>,
}

pub fn fit_spectrum(args: FitSpectrumArgs) -> CliResult {
    let cfg: FitSpectrumConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => FitSpectrumConfig::default(),
    };
    let input = require(args.input.or(cfg.input), "input")?;
    let num_modes = require(args.num_modes.or(cfg.num_modes), "num-modes")?;
    let output = require(args.output.or(cfg.output), "output")?;
    let pin = if args.no_pin {
        false
    } else {
        cfg.pin.unwrap_or(true)
    };
    let auto = args.auto || cfg.auto.unwrap_or(false);

    let c2 = with_path(CorrTensor::read_csv(&input), &input)?;
    let fit = if auto {
        if !pin {
            return Err(CliError::Config(
                "--auto requires the pinned dominant mode (drop --no-pin)".into(),
            ));
        }
        let (fit, used) = fit_spectrum_auto(&c2, num_modes)?;
        if used < num_modes {
            log::warn!("data sustains only {used} of {num_modes} requested modes");
        }
        fit
    } else {
        fit_spectrum_inner(&c2, num_modes, pin)?
    };
    with_path(SpectrumReport::from_fit(&fit).save(&output), &output)?;
    log::info!(
        "fitted {} modes, residual {:.3e}, pinned: {}",
        fit.model.num_modes(),
        fit.residual_rms,
        fit.pinned_dominant
    );
    Ok(())
}

pub(crate) fn fit_spectrum_inner(
    c2: &CorrTensor,
    num_modes: usize,
    pin: bool,
) -> CliResult<SpectrumFit> {
    if pin {
        return Ok(cmps_tomo::specfit::fit_spectrum(c2, num_modes)?);
    }
    let (samples, mult) = gap_averaged_samples(c2)?;
    let init = prony_initialize(&samples, c2.grid().step, num_modes)?;
    let fit = refine_least_squares(
        &samples,
        c2.grid().step,
        Some(&mult),
        &init,
        &RefineOptions {
            pin_dominant: false,
            ..RefineOptions::default()
        },
    )?;
    Ok(fit)
}

// ---------------------------------------------------------------------------
// fit-m

#[derive(Args)]
pub struct FitMArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Higher-order tensor CSV to fit against (typically order 4).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fitted-spectrum JSON from fit-spectrum.
    #[arg(long)]
    spectrum: Option<PathBuf>,
    /// Output JSON for the fitted model.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Random starts for the simplex search.
    #[arg(long)]
    n_starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weight of the order-2 residue anchor.
    #[arg(long)]
    beta: Option<f64>,
    /// Weight of the residue sum rule.
    #[arg(long)]
    gamma: Option<f64>,
    /// Fit a complex vertex matrix.
    #[arg(long)]
    complex: bool,
    /// Objective-evaluation budget per start.
    #[arg(long)]
    max_evals: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitMConfig {
    input: Option<PathBuf>,
    spectrum: Option<PathBuf>,
    output: Option<PathBuf>,
    n_starts: Option<usize>,
    seed: Option<u64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    complex: Option<bool>,
    max_evals: Option<usize>,
}

pub fn fit_m(args: FitMArgs) -> CliResult {
    let cfg: FitMConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => FitMConfig::default(),
    };
    let input = require(args.input.or(cfg.input), "input")?;
    let spectrum_path = require(args.spectrum.or(cfg.spectrum), "spectrum")?;
    let output = require(args.output.or(cfg.output), "output")?;
    let n_starts = args.n_starts.or(cfg.n_starts).unwrap_or(100);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let beta = args.beta.or(cfg.beta).unwrap_or(1.0);
    let gamma = args.gamma.or(cfg.gamma).unwrap_or(1.0);
    let complex = args.complex || cfg.complex.unwrap_or(false);
    let max_evals = args.max_evals.or(cfg.max_evals).unwrap_or(20_000);

    let spectrum = with_path(SpectrumReport::load(&spectrum_path), &spectrum_path)?;
    let model = spectrum.to_model()?;
    let data = with_path(CorrTensor::read_csv(&input), &input)?;
    let problem = MFitProblem::new(
        model.lambdas(),
        model.residues(),
        &data,
        beta,
        gamma,
        complex,
    )?;
    let opts = MFitOptions {
        n_starts,
        seed,
        nm: NelderMeadOptions {
            max_evals,
            ..NelderMeadOptions::default()
        },
    };
    let result = cmps_tomo::mfit::fit_m(&problem, &opts)?;
    with_path(result.save(&output), &output)?;
    log::info!(
        "vertex fit: objective {:.6e} from start {} of {}",
        result.objective,
        result.start_index,
        result.n_starts
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// predict

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fitted-model JSON from fit-m.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Order to predict (even; above 6 needs --high-orders).
    #[arg(long)]
    order: Option<usize>,
    /// Grid as start:step:count.
    #[arg(long)]
    grid: Option<String>,
    /// Output CSV for the predicted tensor.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Allow orders above 6.
    #[arg(long)]
    high_orders: bool,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    model: Option<PathBuf>,
    order: Option<usize>,
    grid: Option<String>,
    output: Option<PathBuf>,
    high_orders: Option<bool>,
}

pub fn predict(args: PredictArgs) -> CliResult {
    let cfg: PredictConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => PredictConfig::default(),
    };
    let model_path = require(args.model.or(cfg.model), "model")?;
    let order = require(args.order.or(cfg.order), "order")?;
    let grid = parse_grid(&require(args.grid.or(cfg.grid), "grid")?)?;
    let output = require(args.output.or(cfg.output), "output")?;
    let high_orders = args.high_orders || cfg.high_orders.unwrap_or(false);
    check_predictable_order(order, high_orders)?;

    let model = with_path(MFitResult::load(&model_path), &model_path)?;
    let eval = model.evaluator()?;
    let (tensor, max_imag) = cmps_tomo::predict::predict(&eval, order, grid)?;
    if max_imag > IMAG_WARN {
        log::warn!("prediction carries imaginary residue {max_imag:.3e}");
    }
    with_path(tensor.write_csv(&output), &output)?;
    log::info!("predicted order-{order} tensor ({} entries)", tensor.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// validate

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fitted-model JSON from fit-m.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Measured tensor CSVs to score against (repeatable).
    #[arg(long, num_args = 1..)]
    measured: Option<Vec<PathBuf>>,
    /// Optional output JSON for the scores.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional directory for projection-slice CSV matrices.
    #[arg(long)]
    slices_dir: Option<PathBuf>,
    /// Grid index of the fixed separation used in slices.
    #[arg(long)]
    fix_index: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateConfig {
    model: Option<PathBuf>,
    measured: Option<Vec<PathBuf>>,
    output: Option<PathBuf>,
    slices_dir: Option<PathBuf>,
    fix_index: Option<usize>,
}

pub fn validate(args: ValidateArgs) -> CliResult {
    let cfg: ValidateConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => ValidateConfig::default(),
    };
    let model_path = require(args.model.or(cfg.model), "model")?;
    let measured_paths = require(args.measured.or(cfg.measured), "measured")?;
    let output = args.output.or(cfg.output);
    let slices_dir = args.slices_dir.or(cfg.slices_dir);
    let fix_index = args.fix_index.or(cfg.fix_index).unwrap_or(1);

    let model = with_path(MFitResult::load(&model_path), &model_path)?;
    let eval = model.evaluator()?;
    let mut measured = Vec::with_capacity(measured_paths.len());
    for p in &measured_paths {
        measured.push(with_path(CorrTensor::read_csv(p), p)?);
    }
    let report = validation_report(&eval, &measured)?;
    print!("{}", render_report(&report));
    if let Some(out) = output {
        with_path(report.save(&out), &out)?;
    }
    if let Some(dir) = slices_dir {
        write_slices(&eval, &measured, fix_index, &dir)?;
    }
    Ok(())
}

/// Write predicted/measured projection matrices for every tensor of order
/// at least 4, named `proj_n{order}_fix{index}_{kind}.csv`.
fn write_slices(
    eval: &ChainEvaluator,
    measured: &[CorrTensor],
    fix_index: usize,
    dir: &Path,
) -> CliResult {
    ensure_dir(dir)?;
    for tensor in measured {
        if tensor.order() < 4 {
            continue;
        }
        let slice = projection_slice(eval, tensor, fix_index)?;
        for kind in ["predicted", "measured"] {
            let name = format!("proj_n{}_fix{}_{}.csv", slice.order, fix_index, kind);
            std::fs::write(dir.join(&name), slice.csv_matrix(kind)?).map_err(TomoError::from)?;
            log::info!("wrote {}", dir.join(&name).display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline

#[derive(Args)]
pub struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measured two-point tensor CSV (spectrum fit input).
    #[arg(long)]
    c2: Option<PathBuf>,
    /// Measured four-point tensor CSV (vertex fit input).
    #[arg(long)]
    c4: Option<PathBuf>,
    /// Optional measured six-point tensor CSV (held-out validation).
    #[arg(long)]
    c6: Option<PathBuf>,
    /// Number of decay modes to fit.
    #[arg(long)]
    num_modes: Option<usize>,
    /// Directory receiving all outputs.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Random starts for the vertex fit.
    #[arg(long)]
    n_starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weight of the order-2 residue anchor.
    #[arg(long)]
    beta: Option<f64>,
    /// Weight of the residue sum rule.
    #[arg(long)]
    gamma: Option<f64>,
    /// Fit a complex vertex matrix.
    #[arg(long)]
    complex: bool,
    /// Orders to predict (comma-separated, even).
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Grid index of the fixed separation used in projection slices.
    #[arg(long)]
    fix_index: Option<usize>,
    /// Objective-evaluation budget per start.
    #[arg(long)]
    max_evals: Option<usize>,
    /// Allow predicting orders above 6.
    #[arg(long)]
    high_orders: bool,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineConfig {
    c2: Option<PathBuf>,
    c4: Option<PathBuf>,
    c6: Option<PathBuf>,
    num_modes: Option<usize>,
    output_dir: Option<PathBuf>,
    n_starts: Option<usize>,
    seed: Option<u64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    complex: Option<bool>,
    orders: Option<Vec<usize>>,
    fix_index: Option<usize>,
    max_evals: Option<usize>,
    high_orders: Option<bool>,
}

pub fn pipeline(args: PipelineArgs) -> CliResult {
    let cfg: PipelineConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    let c2_path = require(args.c2.or(cfg.c2), "c2")?;
    let c4_path = require(args.c4.or(cfg.c4), "c4")?;
    let c6_path = args.c6.or(cfg.c6);
    let num_modes = require(args.num_modes.or(cfg.num_modes), "num-modes")?;
    let out = require(args.output_dir.or(cfg.output_dir), "output-dir")?;
    let n_starts = args.n_starts.or(cfg.n_starts).unwrap_or(100);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let beta = args.beta.or(cfg.beta).unwrap_or(1.0);
    let gamma = args.gamma.or(cfg.gamma).unwrap_or(1.0);
    let complex = args.complex || cfg.complex.unwrap_or(false);
    let orders = args.orders.or(cfg.orders).unwrap_or_else(|| vec![6]);
    let fix_index = args.fix_index.or(cfg.fix_index).unwrap_or(1);
    let max_evals = args.max_evals.or(cfg.max_evals).unwrap_or(20_000);
    let high_orders = args.high_orders || cfg.high_orders.unwrap_or(false);
    for &order in &orders {
        check_predictable_order(order, high_orders)?;
    }
    ensure_dir(&out)?;

    // Load measurements; all grids must agree.
    let c2 = with_path(CorrTensor::read_csv(&c2_path), &c2_path)?;
    if c2.order() != 2 {
        return Err(CliError::Config(format!(
            "--c2 file holds an order-{} tensor",
            c2.order()
        )));
    }
    let c4 = with_path(CorrTensor::read_csv(&c4_path), &c4_path)?;
    if c4.order() != 4 {
        return Err(CliError::Config(format!(
            "--c4 file holds an order-{} tensor",
            c4.order()
        )));
    }
    let grid = *c2.grid();
    if !c4.grid().approx_eq(&grid) {
        return Err(CliError::Tomo(TomoError::GridMismatch(format!(
            "c4 grid {} does not match c2 grid {}",
            c4.grid(),
            grid
        ))));
    }
    let c6 = match &c6_path {
        Some(p) => {
            let t = with_path(CorrTensor::read_csv(p), p)?;
            if t.order() != 6 {
                return Err(CliError::Config(format!(
                    "--c6 file holds an order-{} tensor",
                    t.order()
                )));
            }
            Some(t)
        }
        None => None,
    };

    // Stage 1: decay modes from the two-point function. The requested
    // order is an upper bound: noisy data that cannot sustain it falls
    // back to the largest structurally valid order.
    log::info!("stage 1: fitting up to {num_modes} decay modes");
    let (spectrum_fit, modes_used) = fit_spectrum_auto(&c2, num_modes)?;
    if modes_used < num_modes {
        log::warn!("data sustains only {modes_used} of {num_modes} requested modes");
    }
    let spectrum_report = SpectrumReport::from_fit(&spectrum_fit);
    let spec_path = out.join("spectrum.json");
    with_path(spectrum_report.save(&spec_path), &spec_path)?;
    log::info!(
        "spectrum residual {:.3e} over {} modes",
        spectrum_fit.residual_rms,
        spectrum_fit.model.num_modes()
    );

    // Stage 2: vertex matrix from the four-point function.
    log::info!("stage 2: vertex fit with {n_starts} starts");
    let problem = MFitProblem::new(
        spectrum_fit.model.lambdas(),
        spectrum_fit.model.residues(),
        &c4,
        beta,
        gamma,
        complex,
    )?;
    let opts = MFitOptions {
        n_starts,
        seed,
        nm: NelderMeadOptions {
            max_evals,
            ..NelderMeadOptions::default()
        },
    };
    let vertex_fit = cmps_tomo::mfit::fit_m(&problem, &opts)?;
    let model_path = out.join("model.json");
    with_path(vertex_fit.save(&model_path), &model_path)?;
    log::info!(
        "vertex objective {:.6e} from start {}",
        vertex_fit.objective,
        vertex_fit.start_index
    );

    // Stage 3: predictions.
    let eval = vertex_fit.evaluator()?;
    for &order in &orders {
        let (tensor, max_imag) = eval.fill_simplex(order, grid)?;
        if max_imag > IMAG_WARN {
            log::warn!("order {order}: imaginary residue {max_imag:.3e}");
        }
        let path = out.join(format!("predicted_c{order}.csv"));
        with_path(tensor.write_csv(&path), &path)?;
        log::info!("predicted order-{order} tensor ({} entries)", tensor.len());
    }

    // Stage 4: validation against everything measured.
    let mut measured = vec![c2, c4];
    if let Some(t) = c6 {
        measured.push(t);
    }
    let report = validation_report(&eval, &measured)?;
    let table = render_report(&report);
    print!("{table}");
    std::fs::write(out.join("report.txt"), &table).map_err(TomoError::from)?;
    write_slices(&eval, &measured, fix_index, &out)?;

    let resolved = serde_json::json!({
        "c2": c2_path,
        "c4": c4_path,
        "c6": c6_path,
        "num_modes": num_modes,
        "output_dir": out,
        "n_starts": n_starts,
        "seed": seed,
        "beta": beta,
        "gamma": gamma,
        "complex": complex,
        "orders": orders,
        "fix_index": fix_index,
        "max_evals": max_evals,
        "high_orders": high_orders,
    });
    let full_report = serde_json::json!({
        "config": resolved,
        "spectrum": spectrum_report,
        "vertex_fit": {
            "objective": vertex_fit.objective,
            "start_index": vertex_fit.start_index,
            "n_starts": vertex_fit.n_starts,
            "seed": vertex_fit.seed,
            "converged": vertex_fit.converged,
        },
        "validation": report,
    });
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&full_report).map_err(TomoError::from)?,
    )
    .map_err(TomoError::from)?;
    log::info!("pipeline complete; report in {}", out.display());
    Ok(())
}

//! Command-line front end for the phase-correlation tomography pipeline.
//!
//! Subcommands cover the full workflow: generating synthetic ground truth,
//! simulating interference shots, estimating correlation tensors, fitting
//! the decay spectrum and the vertex matrix, predicting higher orders, and
//! scoring predictions against measurements. Every command is deterministic
//! given its seed, reads its parameters from flags or a JSON config file
//! (flags win), and never modifies its inputs.
//!
//! Failures print a machine-readable JSON object to standard error and exit
//! with 2 (invalid configuration or data), 3 (numerical / fit failure) or
//! 4 (I/O or parse failure). Progress goes to standard error via the
//! logger; results go to files and standard output only.

mod commands;

use clap::{Parser, Subcommand};
use cmps_tomo::TomoError;

#[derive(Parser)]
#[command(
    name = "cmps-tomo",
    version,
    about = "Tomography of continuous matrix-product states from phase correlation data"
)]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random normalized state plus its exact correlation
    /// tensors (optionally with additive Gaussian noise).
    Generate(commands::GenerateArgs),
    /// Draw phase-profile shots from a Gaussian field model.
    SimulateShots(commands::SimulateShotsArgs),
    /// Estimate an even-order correlation tensor from stored shots.
    Estimate(commands::EstimateArgs),
    /// Fit decay modes to a two-point tensor.
    FitSpectrum(commands::FitSpectrumArgs),
    /// Fit the vertex matrix to a higher-order tensor with fixed modes.
    FitM(commands::FitMArgs),
    /// Predict a correlation tensor from a fitted model.
    Predict(commands::PredictArgs),
    /// Score a fitted model against measured tensors.
    Validate(commands::ValidateArgs),
    /// Full pipeline: spectrum fit, vertex fit, prediction, validation.
    Pipeline(commands::PipelineArgs),
}

/// CLI failure: either a configuration problem detected before running, or
/// an error propagated from the toolkit.
pub enum CliError {
    Config(String),
    Tomo(TomoError),
}

impl From<TomoError> for CliError {
    fn from(e: TomoError) -> Self {
        CliError::Tomo(e)
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Tomo(e) => match e {
                TomoError::DimensionMismatch(_) => "dimension-mismatch",
                TomoError::DegenerateSpectrum { .. } => "degenerate-spectrum",
                TomoError::IllConditionedBasis { .. } => "ill-conditioned-basis",
                TomoError::NoPrincipalRoot { .. } => "no-principal-root",
                TomoError::SingularR { .. } => "singular-r",
                TomoError::UnnormalizedState { .. } => "unnormalized-state",
                TomoError::OrderTooHigh { .. } => "order-too-high",
                TomoError::ConstraintInfeasible(_) => "constraint-infeasible",
                TomoError::NegativeGap { .. } => "negative-gap",
                TomoError::OddOrderUnavailable { .. } => "odd-order-unavailable",
                TomoError::OrderTooLarge { .. } => "order-too-large",
                TomoError::RejectionBudgetExhausted { .. } => "rejection-budget-exhausted",
                TomoError::GridMismatch(_) => "grid-mismatch",
                TomoError::CovarianceNotPsd { .. } => "covariance-not-psd",
                TomoError::ConvergenceFailure { .. } => "convergence-failure",
                TomoError::Parse { .. } => "parse",
                TomoError::Io(_) => "io",
                TomoError::Json(_) => "json",
            },
        }
    }

    /// Exit codes: 2 = invalid configuration or data, 3 = numerical / fit
    /// failure, 4 = I/O or parse failure.
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Tomo(e) => match e {
                TomoError::Io(_) | TomoError::Json(_) | TomoError::Parse { .. } => 4,
                TomoError::ConvergenceFailure { .. }
                | TomoError::OrderTooHigh { .. }
                | TomoError::IllConditionedBasis { .. }
                | TomoError::DegenerateSpectrum { .. }
                | TomoError::NoPrincipalRoot { .. }
                | TomoError::SingularR { .. }
                | TomoError::RejectionBudgetExhausted { .. } => 3,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            CliError::Tomo(e) => e.to_string(),
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        // Ignore "already initialized": only the first build wins, which is
        // the one carrying the flag.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::SimulateShots(a) => commands::simulate_shots(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::FitSpectrum(a) => commands::fit_spectrum(a),
        Command::FitM(a) => commands::fit_m(a),
        Command::Predict(a) => commands::predict(a),
        Command::Validate(a) => commands::validate(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };

    if let Err(e) = result {
        let payload = serde_json::json!({
            "error": { "kind": e.kind(), "message": e.message() }
        });
        eprintln!("{payload}");
        std::process::exit(e.exit_code());
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Spectral state-space estimation and prediction of advection-diffusion fields.
///
/// Exit status: 0 success, 2 configuration error, 3 input/output error,
/// 4 numerical failure (divergence, instability), 5 no usable data.
#[derive(Debug, Parser)]
#[command(name = "adstm", version)]
pub struct Cli {
    /// `key = value` run configuration; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark dataset.
    Simulate(SimulateArgs),
    /// Estimate the flow and diffusivity fields from a dataset.
    Flow(FlowArgs),
    /// Fit the state-space model and write filtered and bias fields.
    Fit(FitArgs),
    /// Fit, then forecast a number of steps past the last frame.
    Predict(PredictArgs),
    /// Fit on a training window and score forecasts on the frames after it.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Noise standard deviation of every preset source.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub speed: Option<f64>,
    /// Flow direction in degrees from the first grid axis.
    #[arg(long)]
    pub direction: Option<f64>,
    #[arg(long)]
    pub diffusivity: Option<f64>,
    /// Solver grid refinement factor.
    #[arg(long)]
    pub refine: Option<usize>,
    /// Replace the preset sources: `ID:NOISE:BIAS:MISSING[:R0:R1:C0:C1]`,
    /// the optional rectangle always missing. Repeatable.
    #[arg(long = "source")]
    pub sources: Vec<String>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Directory of `.fgrid` frames.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Value bounds: `none`, `aod`, or `LO,HI`.
    #[arg(long)]
    pub bounds: Option<String>,
    /// Treat out-of-bounds values as errors instead of missing.
    #[arg(long)]
    pub strict: bool,
    /// Stream cadence in seconds.
    #[arg(long)]
    pub cadence: Option<i64>,
    /// Number of leading time steps to use.
    #[arg(long)]
    pub train: Option<usize>,
    /// Optical flow smoothness weight.
    #[arg(long)]
    pub smoothness: Option<f64>,
    /// Optical flow fixed-point iterations.
    #[arg(long = "flow-iterations")]
    pub flow_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, num_args = 2, value_names = ["K1", "K2"])]
    pub truncation: Option<Vec<usize>>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    /// Keep a G1 x G2 sub-grid of pixels.
    #[arg(long, num_args = 2, value_names = ["G1", "G2"])]
    pub downsample: Option<Vec<usize>>,
    /// Uniform flow override: speed (grid units per step) and direction (degrees).
    #[arg(long, num_args = 2, value_names = ["SPEED", "DIR"], allow_negative_numbers = true)]
    pub flow: Option<Vec<f64>>,
    /// Diffusivity used with `--flow`.
    #[arg(long = "flow-diffusivity")]
    pub flow_diffusivity: Option<f64>,
    /// `physics` or `data-driven`.
    #[arg(long)]
    pub model: Option<String>,
    /// Measurement update: `auto`, `innovation` or `information`.
    #[arg(long)]
    pub update: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Forecast steps past the last frame.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Forecast steps scored after the training window.
    #[arg(long)]
    pub horizons: Option<usize>,
}

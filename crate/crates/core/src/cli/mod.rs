//! The `hstl` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_eval, cmd_map, cmd_synth, cmd_train, cmd_transfer, model_window};
pub use config::{
    apply_overrides, ModelSection, OutputSection, PatchSection, PcaSection, RunConfig, SceneSection, SurgeryChoice,
    TrainSection,
};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "hstl", version, about = "Hyperspectral patch classification and transfer learning")]
pub struct Cli {
    /// Worker threads for data-parallel kernels (results do not depend on it).
    #[arg(long, global = true, env = "HSTL_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled scene.
    Synth(SynthArgs),
    /// Fit PCA, train a model from scratch and evaluate it.
    Train(RunArgs),
    /// Truncate a trained model, freeze its trunk and train a new head.
    Transfer(RunArgs),
    /// Evaluate a checkpoint on a scene.
    Eval(EvalArgs),
    /// Render a classification map as PPM.
    Map(MapArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub rows: usize,
    #[arg(long, default_value_t = 32)]
    pub cols: usize,
    #[arg(long, default_value_t = 16)]
    pub bands: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Number of class regions; defaults to twice the class count.
    #[arg(long)]
    pub blobs: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    pub config: PathBuf,
    /// Overrides such as `--train.epochs 3` or `--patches.window=5`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pca: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Evaluate only the test side of this split (otherwise every labeled pixel).
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub split_seed: u64,
    #[arg(long)]
    pub stratified: bool,
    /// Metrics JSON path; printed to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, required_unless_present = "truth")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, required_unless_present = "truth")]
    pub pca: Option<PathBuf>,
    /// Render the ground truth instead of predictions.
    #[arg(long)]
    pub truth: bool,
    /// Classify unlabeled pixels too.
    #[arg(long)]
    pub no_mask: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Runs a parsed command inside a thread pool of the requested size.
pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&RunConfig::load(&a.config, &a.overrides)?),
        Command::Transfer(a) => cmd_transfer(&RunConfig::load(&a.config, &a.overrides)?),
        Command::Eval(a) => cmd_eval(&a),
        Command::Map(a) => cmd_map(&a),
    })
}

/// Parses `args` (including the program name), runs and returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! `zbnn` command-line front end.
//!
//! Every command writes its primary artifact to `--out` and a run manifest to
//! `<out>.manifest.json`.
//!
//! Exit codes: 0 success or certified, 2 config/usage, 3 IO, 4 numerical failure,
//! 5 invariance failure, 6 falsified, 7 inapplicable.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::{manifest_path, RunManifest};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_INVARIANCE: u8 = 5;
pub const EXIT_FALSIFIED: u8 = 6;
pub const EXIT_INAPPLICABLE: u8 = 7;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: EXIT_IO, message: message.into() }
    }
}

impl From<zbnn::Error> for Failure {
    fn from(e: zbnn::Error) -> Self {
        use zbnn::Error::*;
        let code = match &e {
            Io(_) | Format(_) => EXIT_IO,
            Numerical(_) => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "zbnn", version, about = "Train, probe and certify zero-bias ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network from a TOML config.
    Train(TrainArgs),
    /// Test accuracy of a checkpoint on inputs multiplied by each scalar.
    ScalarSweep(SweepArgs),
    /// Issue or replay a robustness certificate.
    Certify(CertifyArgs),
    /// Softmax output of a checkpoint on the all-zero input.
    Fairness(FairnessArgs),
    /// Rasterise the activation regions of a 2D checkpoint.
    Regions(RegionsArgs),
    /// Logits of a 2D checkpoint along a ray from the origin.
    Ray(RayArgs),
    /// Find test inputs that share an activation pattern.
    NapSearch(NapSearchArgs),
    /// Finite-width kernel studies.
    Ntk(NtkArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// MNIST directory (required for `kind = "mnist"` data)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// checkpoint path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// comma-separated positive scalars; defaults to the 11-value sweep
    #[arg(long, value_delimiter = ',')]
    pub scalars: Option<Vec<f64>>,
    /// evaluate only the first N test images
    #[arg(long)]
    pub limit: Option<usize>,
    /// JSON report; a CSV table is written next to it
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CertifyMode {
    Directional,
    Interpolation,
    Convex,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, required_unless_present = "replay")]
    pub mode: Option<CertifyMode>,
    /// inline input values, comma-separated; repeat per input
    #[arg(long, allow_hyphen_values = true)]
    pub point: Vec<String>,
    /// JSON file holding a flat array of input values; repeat per input
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// MNIST test-set index; repeat per input (needs --data)
    #[arg(long)]
    pub index: Vec<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// directional scalars; defaults to the 11-value sweep
    #[arg(long, value_delimiter = ',')]
    pub scalars: Option<Vec<f64>>,
    /// interpolation grid size
    #[arg(long, default_value_t = 1000)]
    pub lambdas: usize,
    /// convex-hull samples
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// re-check an existing certificate instead of issuing one
    #[arg(long, conflicts_with = "mode")]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FairnessArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RegionsArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// x_min,x_max,y_min,y_max
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Option<Vec<f64>>,
    #[arg(long, default_value_t = zbnn::geometry::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// also write the per-cell CSV
    #[arg(long)]
    pub csv: bool,
    /// PPM image; the summary JSON is written next to it
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RayArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// direction x,y (normalised before use)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Vec<f64>,
    /// explicit radii; otherwise `steps` evenly spaced values up to `r_max`
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3.0)]
    pub r_max: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// CSV profile
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct NapSearchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// maximum number of pairs reported
    #[arg(long, default_value_t = 100)]
    pub limit: usize,
    /// search only the first N test images
    #[arg(long)]
    pub test_limit: Option<usize>,
    /// report pairs whose predictions differ too
    #[arg(long)]
    pub any_class: bool,
    /// certify every pair on a grid of this many points
    #[arg(long)]
    pub certify: Option<usize>,
    /// write a PGM strip per pair into this directory
    #[arg(long)]
    pub strips: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct NtkArgs {
    #[arg(long, value_delimiter = ',', default_value = "64,256,1024")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// number of weight layers
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 1)]
    pub outputs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub beta_compare: f64,
    /// number of inputs
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// take inputs from the MNIST test set; Gaussian inputs otherwise
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// dimension of Gaussian inputs
    #[arg(long, default_value_t = 16)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// also run the training-drift study for this many steps
    #[arg(long, default_value_t = 0)]
    pub drift_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub drift_lr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("ZBNN_THREADS") else { return Ok(()) };
    let threads: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure::usage(format!("ZBNN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| Failure::usage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }

    let (name, out) = match &cli.command {
        Command::Train(a) => ("train", &a.out),
        Command::ScalarSweep(a) => ("scalar-sweep", &a.out),
        Command::Certify(a) => ("certify", &a.out),
        Command::Fairness(a) => ("fairness", &a.out),
        Command::Regions(a) => ("regions", &a.out),
        Command::Ray(a) => ("ray", &a.out),
        Command::NapSearch(a) => ("nap-search", &a.out),
        Command::Ntk(a) => ("ntk", &a.out),
    };
    let out = out.clone();
    let mut manifest = RunManifest::new(name);
    let start = Instant::now();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a, &mut manifest),
        Command::ScalarSweep(a) => commands::scalar_sweep(a, &mut manifest),
        Command::Certify(a) => commands::certify(a, &mut manifest),
        Command::Fairness(a) => commands::fairness(a, &mut manifest),
        Command::Regions(a) => commands::regions(a, &mut manifest),
        Command::Ray(a) => commands::ray(a, &mut manifest),
        Command::NapSearch(a) => commands::nap_search(a, &mut manifest),
        Command::Ntk(a) => commands::ntk(a, &mut manifest),
    };
    let status = match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            manifest.error = Some(f.message);
            f.code
        }
    };
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.exit_status = status;
    if let Err(e) = zbnn::io::write_json(&manifest_path(&out), &manifest) {
        eprintln!("error: could not write run manifest: {e}");
        if status == 0 {
            return ExitCode::from(EXIT_IO);
        }
    }
    ExitCode::from(status)
}

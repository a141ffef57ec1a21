//! `sampnum`: spectra, node sampling, frame certification, subsampling,
//! recovery and rate experiments from the command line.
//!
//! Exit status: 0 success, 1 other failure, 2 usage or invalid input,
//! 3 rank deficiency or failed certification, 4 uncertifiable truncation.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sampnum_core::spectrum::KernelModel;

#[derive(Parser, Debug)]
#[command(
    name = "sampnum",
    version,
    about = "Sampling recovery experiments in kernel spaces"
)]
struct Cli {
    /// `key = value` file of flags; flags on the command line take precedence.
    /// A `command` key selects the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for trial grids (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Where to write the run manifest (default: `<out>.manifest`, or
    /// standard error when there is no --out).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Leading singular numbers and labels as CSV.
    Spectrum(SpectrumArgs),
    /// Draw nodes from the sampling density.
    Sample(SampleArgs),
    /// Frame certificates for random node sets.
    Certify(CertifyArgs),
    /// Subsample a frame read from CSV.
    Subsample(SubsampleArgs),
    /// Least-squares recovery of a finite expansion from random samples.
    Recover(RecoverArgs),
    /// Worst-case error over a grid of m, with a fitted decay rate.
    Rate(RateArgs),
    /// Recompute the explicit constants of the recovery bound.
    Constants(ConstantsArgs),
}

const SUBCOMMANDS: [&str; 7] = [
    "spectrum",
    "sample",
    "certify",
    "subsample",
    "recover",
    "rate",
    "constants",
];

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Family {
    /// Mixed Sobolev space on the torus.
    Torus,
    /// Legendre polynomials with a given singular number sequence.
    Legendre,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "torus")]
    model: Family,
    /// Torus dimension.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Torus smoothness (> 1/2).
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Comma-separated singular numbers for the Legendre model.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sigma: Vec<f64>,
    /// File of singular numbers, separated by commas, spaces or newlines.
    #[arg(long, value_name = "FILE")]
    sigma_file: Option<PathBuf>,
}

impl ModelArgs {
    fn build(&self) -> Result<KernelModel> {
        match self.model {
            Family::Torus => {
                if !self.sigma.is_empty() || self.sigma_file.is_some() {
                    return Err(commands::UsageError(
                        "--sigma and --sigma-file apply to the Legendre model only".into(),
                    )
                    .into());
                }
                Ok(KernelModel::torus(self.d, self.s)?)
            }
            Family::Legendre => {
                let mut sigma = self.sigma.clone();
                if let Some(path) = &self.sigma_file {
                    sigma.extend(commands::read_sigma_file(path)?);
                }
                Ok(KernelModel::legendre(sigma)?)
            }
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SpectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Number of eigenpairs.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Order of the density; the frame has m - 1 columns.
    #[arg(long)]
    m: usize,
    /// Number of nodes (default: smallest n with m <= n / (40 ln n)).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, env = "SAMPNUM_SEED", default_value_t = 0)]
    seed: u64,
    /// Node CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the frame matrix as CSV, one row per node.
    #[arg(long, value_name = "FILE")]
    matrix_out: Option<PathBuf>,
    /// Export the plain evaluation matrix instead of the density-weighted one.
    #[arg(long)]
    unweighted: bool,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct CertifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long)]
    m: usize,
    /// Nodes per trial (default: smallest n with m <= n / (40 ln n)).
    #[arg(long)]
    n: Option<usize>,
    /// Failure exponent in the oversampling condition.
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, env = "SAMPNUM_SEED", default_value_t = 0)]
    seed: u64,
    /// Per-trial extremal eigenvalues as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    /// Exhaustive two-class partition (n <= 24); J is the smaller class.
    Brute,
    /// Recursive halving down to the size budget.
    Halving,
    /// Barrier greedy selection.
    Greedy,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SubsampleArgs {
    /// Frame CSV: one row per vector, `re,im` pairs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Norm bound factor, |u_i|^2 <= k1 m/n (default: tightest).
    #[arg(long)]
    k1: Option<f64>,
    /// Lower frame bound (default: the frame's own).
    #[arg(long)]
    k2: Option<f64>,
    /// Upper frame bound (default: the frame's own).
    #[arg(long)]
    k3: Option<f64>,
    /// Greedy subsample size (default: 4m).
    #[arg(long)]
    target: Option<usize>,
    #[arg(long, env = "SAMPNUM_SEED", default_value_t = 0)]
    seed: u64,
    /// JSON report (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct RecoverArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long)]
    m: usize,
    /// Number of nodes (default: smallest n with m <= n / (40 ln n)).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, env = "SAMPNUM_SEED", default_value_t = 0)]
    seed: u64,
    /// Target function as comma-separated `k:re[:im]` terms on the one-based
    /// orthonormal eigenbasis, e.g. `1:1,4:0.5:-0.25`.
    #[arg(long)]
    function: String,
    /// Coefficient CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256")]
    m_grid: Vec<usize>,
    /// `random` (all drawn nodes) or `subsample` (greedy reduction to ~4m).
    #[arg(long, default_value = "subsample")]
    method: String,
    /// Seeds per m, starting at --seed.
    #[arg(long, default_value_t = 3)]
    trials: u64,
    #[arg(long, env = "SAMPNUM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    /// Results CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ConstantsArgs {
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

impl Command {
    fn out(&self) -> Option<&PathBuf> {
        match self {
            Command::Spectrum(a) => a.out.as_ref(),
            Command::Sample(a) => a.out.as_ref(),
            Command::Certify(a) => a.out.as_ref(),
            Command::Subsample(a) => a.out.as_ref(),
            Command::Recover(a) => a.out.as_ref(),
            Command::Rate(a) => a.out.as_ref(),
            Command::Constants(_) => None,
        }
    }
}

fn write_manifest(cli: &Cli) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(j) = cli.jobs {
        extra.push(("jobs", j.to_string()));
    }
    if let Some(m) = &cli.manifest {
        extra.push(("manifest", m.display().to_string()));
    }
    let text = config::manifest_text(&cli.command, &extra)?;
    let target = cli.manifest.clone().or_else(|| {
        cli.command.out().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".manifest");
            PathBuf::from(s)
        })
    });
    match target {
        Some(path) => commands::write_file(&path, text.as_bytes()),
        None => {
            std::io::stderr().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()?;
    }
    if !matches!(cli.command, Command::Constants(_)) {
        write_manifest(&cli)?;
    }
    match &cli.command {
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Sample(a) => commands::sample(a),
        Command::Certify(a) => commands::certify(a),
        Command::Subsample(a) => commands::subsample(a),
        Command::Recover(a) => commands::recover(a),
        Command::Rate(a) => commands::rate(a),
        Command::Constants(a) => commands::constants(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use sampnum_core::Error;
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_rank_or_certification() => 3,
        Some(e) if e.is_truncation() => 4,
        Some(
            Error::InvalidModel(_)
            | Error::Range { .. }
            | Error::InvalidArgument(_)
            | Error::LengthMismatch { .. }
            | Error::Parse(_),
        ) => 2,
        _ if err.downcast_ref::<commands::UsageError>().is_some() => 2,
        _ if err.downcast_ref::<commands::Uncertified>().is_some() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match config::expand_config(args, &SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

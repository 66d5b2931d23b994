//! `nsql` — train, sample, and evaluate quantile-assignment generative
//! models from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure. Worker parallelism is capped by the NSQL_THREADS environment
//! variable (default: machine parallelism).

mod commands;
mod config;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nsql_core::assign::BenchMethod;
use nsql_core::train::SampleMode;
use nsql_core::Error;

#[derive(Parser)]
#[command(
    name = "nsql",
    about = "Encoder-free generative modeling by quantile assignment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleModeArg {
    LatticeRows,
    PriorDraws,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMethodArg {
    Hungarian,
    Greedy,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train a decoder on a dataset; writes checkpoint, latents, history,
    /// and a resolved-config snapshot into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the dataset path from the config file.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode samples from a trained model directory.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "prior-draws")]
        mode: SampleModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (defaults to the model directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare real and generated tensors: proxy-FID, SSIM stats, L1.
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image shape as HxWxC (default: square grayscale inference).
        #[arg(long)]
        shape: Option<String>,
        #[arg(long, default_value_t = 7)]
        window: usize,
        #[arg(long, default_value_t = 128)]
        feature_dim: usize,
        /// Paired images used for SSIM/L1 statistics.
        #[arg(long, default_value_t = 50)]
        pairs: usize,
    },
    /// Emit a quantile lattice as CSV (and optionally the binary container).
    Lattice {
        #[arg(long)]
        prior: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "sobol")]
        source: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        binary_out: Option<PathBuf>,
    },
    /// Time the assignment solvers on seeded random cost matrices.
    BenchAssign {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "both")]
        method: BenchMethodArg,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export the latent memory bank of a trained model as CSV.
    ExportLatents {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Input(_) | Error::Capacity(_) => 2,
        Error::Io(_) | Error::Format(_) | Error::Length(_) | Error::Shape { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn parse_shape(text: &str) -> Result<(usize, usize, usize), Error> {
    let parts: Vec<&str> = text.split(['x', 'X', ',']).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "--shape expects HxWxC, got \"{text}\""
        )));
    }
    let mut dims = [0usize; 3];
    for (slot, part) in dims.iter_mut().zip(parts.iter()) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("--shape: {e}")))?;
    }
    Ok((dims[0], dims[1], dims[2]))
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("NSQL_THREADS") {
        if let Ok(threads) = value.trim().parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut sink = stdout.lock();
    match cli.command {
        Command::Train { config, data, out } => {
            commands::cmd_train(&config, data.as_deref(), &out)
        }
        Command::Sample {
            model,
            n,
            mode,
            seed,
            out,
        } => {
            let mode = match mode {
                SampleModeArg::LatticeRows => SampleMode::LatticeRows,
                SampleModeArg::PriorDraws => SampleMode::PriorDraws,
            };
            commands::cmd_sample(&model, n, mode, seed, out.as_deref())
        }
        Command::Eval {
            real,
            fake,
            seed,
            shape,
            window,
            feature_dim,
            pairs,
        } => {
            let shape = shape.as_deref().map(parse_shape).transpose()?;
            let args = commands::EvalArgs {
                real,
                fake,
                seed,
                shape,
                window,
                feature_dim,
                pairs,
            };
            commands::cmd_eval(&args, &mut sink)
        }
        Command::Lattice {
            prior,
            d,
            n,
            source,
            seed,
            out,
            binary_out,
        } => {
            let args = commands::LatticeArgs {
                prior,
                dim: d,
                n,
                source,
                seed,
                out,
                binary_out,
            };
            commands::cmd_lattice(&args, &mut sink)
        }
        Command::BenchAssign {
            n,
            method,
            repeats,
            seed,
        } => {
            let method = match method {
                BenchMethodArg::Hungarian => BenchMethod::Hungarian,
                BenchMethodArg::Greedy => BenchMethod::Greedy,
                BenchMethodArg::Both => BenchMethod::Both,
            };
            commands::cmd_bench_assign(n, method, repeats, seed, &mut sink)
        }
        Command::ExportLatents { model, out } => {
            commands::cmd_export_latents(&model, out.as_deref(), &mut sink)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_thread_pool();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

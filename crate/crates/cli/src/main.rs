//! `rexp` — dataset generation, experiment execution and report emission.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 run
//! halted early by the glitch stop.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rexp",
    version,
    about = "Recurrent-expansion experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a noisy-sine dataset CSV.
    Gen {
        /// Number of samples (>= 2).
        #[arg(long)]
        n: usize,
        /// Noise standard deviation (>= 0).
        #[arg(long)]
        sigma: f64,
        /// Generator seed.
        #[arg(long)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Range start (samples include both endpoints).
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        /// Range end; must exceed --lo.
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
    },
    /// Execute a run described by a key=value config file.
    Run {
        /// Config file path (key=value lines; see --print-config for keys).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for summary.csv, loss curves and run_meta.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the effective configuration (defaults merged with the
        /// config file, if given) and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summarize a finished run directory.
    Report {
        /// Run directory containing summary.csv.
        #[arg(long)]
        run: PathBuf,
        /// Also write a markdown table to this path.
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
}

fn init_thread_pool() {
    // REXP_THREADS caps the worker count; 0 or unset means automatic.
    if let Ok(v) = std::env::var("REXP_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Gen {
            n,
            sigma,
            seed,
            out,
            lo,
            hi,
        } => commands::gen(n, sigma, seed, &out, lo, hi),
        Command::Run {
            config,
            out,
            print_config,
        } => commands::run(config.as_deref(), out.as_deref(), print_config),
        Command::Report { run, markdown } => commands::report(&run, markdown.as_deref()),
    };
    ExitCode::from(code)
}

//! `nlkg` — runner for the spectral Birkhoff normal-form toolkit.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure
//! (divisor floor, step collapse), 3 acceptance failure.

use clap::{Parser, Subcommand};
use nlkg_core::config::RunConfig;
use nlkg_core::pipeline;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nlkg",
    about = "Spectral Birkhoff normal-form toolkit for the 1-D nonlinear Klein-Gordon equation",
    long_about = "Frequency tables, zero-momentum polynomial algebra, small-divisor scans,\n\
                  recursive normal-form construction and symplectic split-step experiments.\n\
                  All randomness flows from the config seed; reruns with the same config\n\
                  reproduce byte-identical payloads.",
    version
)]
struct Cli {
    /// Path to the run configuration (TOML). Missing file = built-in defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config `output.dir` and NLKG_OUTPUT_DIR).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the frequency table (k, lambda_k, omega_k) as CSV.
    Frequencies,
    /// Expand the nonlinearity, cache the polynomials and report momentum support.
    Expand,
    /// Monte-Carlo scan of the non-resonance condition over (c, potential) cells.
    Scan,
    /// Emit the worst small divisors as CSV.
    DivisorAtlas {
        /// How many rows to keep.
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Run the recursive Lie-transform construction; write chi/Z and diagnostics.
    NormalForm,
    /// Evolve the truncated system and record the stability diagnostics.
    Simulate,
    /// Fit the action-distance scaling exponent over an amplitude ladder.
    ScalingExperiment {
        /// Ladder amplitudes (defaults to 1e-2, 3e-3, 1e-3).
        #[arg(long, value_delimiter = ',')]
        amplitudes: Vec<f64>,
    },
    /// Run the tail-control experiment.
    TailExperiment,
    /// Run the full acceptance suite and emit the pass/fail matrix.
    VerifyAll,
    /// Print the default configuration.
    DefaultConfig,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, nlkg_core::Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn output_dir(cli_override: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = cli_override {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("NLKG_OUTPUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(&cfg.output.dir)
}

fn report_files(files: &[PathBuf], base: &Path) {
    for f in files {
        let shown = f.strip_prefix(base).unwrap_or(f);
        println!("wrote {}", base.join(shown).display());
    }
}

fn run() -> Result<ExitCode, nlkg_core::Error> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    let out = output_dir(&cli.out, &cfg);
    match cli.command {
        Command::Frequencies => {
            let files = pipeline::run_frequencies(&cfg, &out)?;
            report_files(&files, &out);
        }
        Command::Expand => {
            let files = pipeline::run_expand(&cfg, &out)?;
            report_files(&files, &out);
        }
        Command::Scan => {
            let files = pipeline::run_scan(&cfg, &out)?;
            report_files(&files, &out);
        }
        Command::DivisorAtlas { count } => {
            let files = pipeline::run_divisor_atlas(&cfg, &out, count)?;
            report_files(&files, &out);
        }
        Command::NormalForm => {
            let files = pipeline::run_normal_form(&cfg, &out)?;
            report_files(&files, &out);
        }
        Command::Simulate => {
            let files = pipeline::run_simulate(&cfg, &out)?;
            report_files(&files, &out);
        }
        Command::ScalingExperiment { amplitudes } => {
            let files = pipeline::run_scaling_experiment(&cfg, &out, &amplitudes)?;
            report_files(&files, &out);
        }
        Command::TailExperiment => {
            let files = pipeline::run_tail_experiment(&cfg, &out)?;
            report_files(&files, &out);
        }
        Command::VerifyAll => {
            let (files, results) = pipeline::run_verify_all(&cfg, &out)?;
            for r in &results {
                println!("{}", r.line());
            }
            report_files(&files, &out);
            if !results.iter().all(|r| r.pass) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

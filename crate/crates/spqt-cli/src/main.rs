//! `spqt` — generate synthetic spectral ensembles, quantize matrices,
//! analyze spectra, and verify the random-matrix predictions.
//!
//! Exit codes: 0 success (all verifications pass), 1 runtime or
//! verification failure, 2 usage or configuration error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "spqt", version, about = "Spectral-fidelity quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Zipf-ensemble embedding matrix and save it as SPQT.
    Synth {
        /// Vocabulary size.
        #[arg(long, default_value_t = 256)]
        v: usize,
        /// Zipf decay exponent (must exceed 1).
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
        /// Embedding dimension.
        #[arg(long, default_value_t = 512)]
        d: usize,
        /// Number of sampled token columns.
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output SPQT path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize a matrix with a preset scheme and report error statistics.
    Quantize {
        /// Input matrix (SPQT or CSV, by extension).
        #[arg(long = "in")]
        input: PathBuf,
        /// Scheme preset: int4, nvfp4, mxfp4, or step.
        #[arg(long)]
        scheme: String,
        /// Block size override (element count; 0 selects one global block;
        /// presets pick 16/32/global).
        #[arg(long)]
        block: Option<usize>,
        /// Level count for int4, or the explicit step for the step scheme.
        #[arg(long)]
        l: Option<f64>,
        /// Output path for the quantized matrix.
        #[arg(long)]
        out: PathBuf,
        /// Optional output path for the error matrix.
        #[arg(long = "err-out")]
        err_out: Option<PathBuf>,
    },
    /// Singular-value spectrum, stable rank, and power-law fit of a matrix.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV (columns k, sigma, cum_energy_frac).
        #[arg(long)]
        csv: PathBuf,
        /// Power-law fit range, 1-based inclusive.
        #[arg(long = "fit-lo")]
        fit_lo: Option<usize>,
        #[arg(long = "fit-hi")]
        fit_hi: Option<usize>,
    },
    /// Run verification protocols and write CSV/JSON reports.
    Verify {
        /// Experiment config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// all, unbias, regress, srank, bbp, bernstein, gradbound, failprof.
        #[arg(long, default_value = "all")]
        protocol: String,
        #[arg(long = "report-dir")]
        report_dir: PathBuf,
    },
    /// Compare the spectra of two equally-shaped matrices.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Output CSV (columns k, sigma_a, sigma_b, ratio_b_over_a, rel_err).
        #[arg(long)]
        csv: PathBuf,
    },
}

/// Failures carrying their process exit code.
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    Usage(String),
    /// Runtime failure: I/O, shapes, failed verification (exit 1).
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            v,
            alpha,
            d,
            n,
            seed,
            out,
        } => commands::synth(v, alpha, d, n, seed, &out),
        Command::Quantize {
            input,
            scheme,
            block,
            l,
            out,
            err_out,
        } => commands::quantize(&input, &scheme, block, l, &out, err_out.as_deref()),
        Command::Spectrum {
            input,
            csv,
            fit_lo,
            fit_hi,
        } => commands::spectrum(&input, &csv, fit_lo, fit_hi),
        Command::Verify {
            config,
            protocol,
            report_dir,
        } => commands::verify(config.as_deref(), &protocol, &report_dir),
        Command::Compare { a, b, csv } => commands::compare(&a, &b, &csv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

//! The `invsq` command line.
//!
//! Every subcommand writes its result file plus `<out>.manifest.json` holding
//! the resolved parameters, the parsed potential spec, tolerances and crate
//! versions. Exit codes: 0 success, 1 numerical or I/O failure, 2 usage error
//! or malformed spec.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use invsq_core::config::SpecError;

mod commands;
pub mod output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("malformed potential spec: {0}")]
    Spec(#[from] SpecError),
    #[error("{0}")]
    Domain(#[from] invsq_core::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Spec(_) => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "invsq", version, about = "Bound states of Schrödinger operators with inverse-square tails")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides; each subcommand documents its own defaults.
#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// ODE tolerance (count: 1e-10; exterior, ladder, localize, phi-residual: 1e-12).
    #[arg(long, global = true, value_parser = positive)]
    pub tol_ode: Option<f64>,
    /// Eigenvalue tolerance: angular class grouping (1e-8) or ladder root width (1e-12).
    #[arg(long, global = true, value_parser = positive)]
    pub tol_eig: Option<f64>,
    /// Spherical-harmonic basis size.
    #[arg(long, global = true, default_value_t = invsq_core::angular::DEFAULT_BASIS)]
    pub basis: usize,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Angular eigenvalues −μ of Δ_S + P.
    Angular {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bound-state counts over an E grid, per critical mode.
    Count {
        #[arg(long)]
        potential: PathBuf,
        /// Comma-separated E values (default 1e-2,1e-4,...,1e-12).
        #[arg(long = "E-grid", value_delimiter = ',', value_parser = positive)]
        e_grid: Option<Vec<f64>>,
        /// Envelope sign; overrides `radial.sign` in the spec.
        #[arg(long, value_enum)]
        sign: Option<Sign>,
        /// Count non-critical modes too.
        #[arg(long)]
        all_modes: bool,
        #[arg(long)]
        out: PathBuf,
        /// Plot series: ln(1/E) against total count.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Slope of total count against ln(1/E) from a `count` CSV.
    Slope {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exterior solution X^λ for one coupling μ.
    Exterior {
        #[arg(long, allow_negative_numbers = true)]
        mode_mu: f64,
        #[arg(long, value_parser = positive)]
        lambda: f64,
        #[arg(long, default_value_t = 3)]
        dimension: usize,
        /// Radii in units of 1/√λ.
        #[arg(long, default_value_t = 1e-3, value_parser = positive)]
        x_min: f64,
        #[arg(long, default_value_t = 10.0, value_parser = positive)]
        x_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigenvalue ladder λ_n of the critical sector.
    Ladder {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, default_value_t = 25)]
        n_max: usize,
        #[arg(long)]
        out: PathBuf,
        /// Plot series: n against ln λ_n.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Annulus holding 1 − ε of the n-th eigenfunction's mass.
    Localize {
        /// Defaults to the σ = 1/2 model.
        #[arg(long)]
        potential: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1, value_parser = positive)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Approximate eigenfunctions and their residuals.
    PhiResidual {
        #[arg(long)]
        potential: PathBuf,
        /// Inclusive label range A:B.
        #[arg(long, value_parser = n_range)]
        n_range: (usize, usize),
        #[arg(long, default_value_t = invsq_core::approxefn::DEFAULT_DELTA, value_parser = positive)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        mode_cut: usize,
        /// Comma-separated amplitudes ψ_i of the retained sectors (default 1,0,0,...).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        psi: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        /// Plot series: λ against residual.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Counts at critical coupling: the oscillating counterexample against a fast-decaying log-power.
    Counterexample {
        /// Strictly decreasing E values (default 1e-3,1e-5,1e-7).
        #[arg(long = "E-grid", value_delimiter = ',', value_parser = positive)]
        e_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Even and odd hemisphere potentials: λ_min and counts.
    Hemisphere {
        #[arg(long, default_value_t = 0.01, value_parser = positive)]
        epsilon: f64,
        /// Comma-separated E values (default 1e-4,1e-8,...,1e-32).
        #[arg(long = "E-grid", value_delimiter = ',', value_parser = positive)]
        e_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Sign {
    Plus,
    Minus,
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{s}` must be positive and finite"))
    }
}

fn n_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("`{s}`: expected A:B"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if a == 0 || b < a {
        return Err(format!("`{s}`: need 1 <= A <= B"));
    }
    Ok((a, b))
}

/// Parses `argv` (program name first), runs the subcommand, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match commands::dispatch(&cli) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_and_grids() {
        assert_eq!(n_range("10:25"), Ok((10, 25)));
        assert!(n_range("5:4").is_err());
        assert!(n_range("0:4").is_err());
        assert!(positive("-1").is_err());
        let cli = Cli::try_parse_from(["invsq", "count", "--potential", "p.json", "--E-grid", "1e-2,1e-4", "--out", "o.csv"]).unwrap();
        match cli.command {
            Command::Count { e_grid, .. } => assert_eq!(e_grid, Some(vec![1e-2, 1e-4])),
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["invsq", "ladder", "--bogus"]), 2);
    }
}

//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::io::{ColumnSpec, Format};
use crate::report::parse_tolerance;

#[derive(Debug, Parser)]
#[command(name = "mz-workbench", version, about = "Memory kernels, fluctuating forces and coarse-grained GLE sampling")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Time step; must agree with input files when both are given.
    #[arg(long, global = true)]
    pub dt: Option<f64>,

    /// Number of time steps; must agree with input files when both are given.
    #[arg(long, global = true)]
    pub steps: Option<usize>,

    /// Per-check tolerance override, e.g. `--tol gle_residual=1e-5`.
    #[arg(long = "tol", global = true, value_name = "NAME=VAL", value_parser = parse_tolerance)]
    pub tol: Vec<(String, f64)>,

    /// Halve every default tolerance.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Encoding of series and ensemble outputs.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Memory kernel from a sampled autocorrelation (`t,value` CSV).
    Kernel {
        #[arg(long)]
        acf: PathBuf,
    },
    /// Autocorrelation from a sampled memory kernel.
    Acf {
        #[arg(long)]
        kernel: PathBuf,
        /// Initial value C(0).
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
    },
    /// Gaussian ensembles with a prescribed autocorrelation.
    Simulate {
        #[arg(long)]
        acf: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        method: MethodArg,
        /// Number of realizations M.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Mori decomposition of a skew generator with the full verification suite.
    Mzlab {
        #[command(flatten)]
        generator: GeneratorArgs,
        /// Observable: `eK` (unit vector, 1-based), `random`, or comma-separated components.
        #[arg(long, default_value = "e1")]
        z: String,
    },
    /// Slow/fast split of a skew generator at cutoff frequency `omega`.
    Split {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long)]
        omega: f64,
    },
    /// Harmonic oscillator phase-space demos.
    Oscillator {
        #[arg(long, value_enum)]
        demo: Demo,
        #[arg(long, default_value_t = 8)]
        n_max: u32,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Gauss-Hermite nodes per axis.
        #[arg(long, default_value_t = 64)]
        nodes: usize,
    },
    /// Empirical autocorrelation of externally simulated trajectories.
    Ingest {
        /// CSV with a time column followed by one column per trajectory.
        #[arg(long)]
        input: PathBuf,
        /// `all`, or comma-separated column names or zero-based indices.
        #[arg(long, default_value = "all")]
        columns: ColumnSpec,
    },
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct GeneratorSource {
    /// Generator JSON file.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Dense random generator of this dimension, drawn from `--seed`.
    #[arg(long)]
    pub random: Option<usize>,
    /// Rotation frequencies, conjugated by a random orthogonal matrix from `--seed`.
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    #[command(flatten)]
    pub source: GeneratorSource,
    /// Total dimension for `--frequencies` (extra directions form the kernel).
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gle,
    Direct,
    Spectral,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Unboundedness,
    Acf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from([
            "mz-workbench", "mzlab", "--random", "6", "--seed", "3", "--tol", "gle_residual=1e-5", "--strict",
        ])
        .unwrap();
        assert_eq!(cli.global.seed, 3);
        assert!(cli.global.strict);
        assert_eq!(cli.global.tol, vec![("gle_residual".to_string(), 1e-5)]);
        assert!(Cli::try_parse_from(["mz-workbench", "mzlab"]).is_err());
        assert!(Cli::try_parse_from(["mz-workbench", "split", "--random", "4", "--generator", "g.json", "--omega", "1"]).is_err());
    }
}

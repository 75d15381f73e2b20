use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "scorerule", version, about = "Minimum scoring rule inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and report θ̂ with its sandwich matrices.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rule: RuleArgs,
        /// CSV data file.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Test θ = θ0 (or ψ = ψ0 with --psi).
    Test {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated null values, or `@fit.json` to read `theta_hat`
        /// from an earlier `fit`. With --psi, the values of ψ only.
        #[arg(long, allow_hyphen_values = true)]
        theta0: String,
        /// Comma-separated indices of the interest parameter ψ.
        #[arg(long, value_delimiter = ',')]
        psi: Option<Vec<usize>>,
        /// Comma-separated statistics, e.g. `wald,ratio_inv`.
        #[arg(long, value_delimiter = ',')]
        stat: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',', default_value = "0.9,0.95,0.99")]
        levels: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a coverage experiment from a JSON spec or a bundled table.
    Simulate {
        /// Path to a spec file, or one of table1, table2, table3.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Probe whether the rule has bounded influence in a location model.
    RobustCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        rule: RuleArgs,
        /// Parameter at which to evaluate; defaults to the standard member.
        #[arg(long, allow_hyphen_values = true)]
        theta0: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Location,
    LocationScale,
    Equicorrelated,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityKind {
    Normal,
    Logistic,
    Cauchy,
    Exponential,
    Lognormal,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Standard density of the location families.
    #[arg(long, value_enum, default_value = "normal")]
    pub density: DensityKind,
    /// Known scale of the location model.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Dimension of the equi-correlated model; defaults to the data width.
    #[arg(long)]
    pub q: Option<usize>,
    /// Number of regression coefficients; defaults to the data width − 1.
    #[arg(long)]
    pub p: Option<usize>,
    /// Known error standard deviation in regression.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    /// log, brier, tsallis, hyvarinen, pairwise-log, pairwise-tsallis,
    /// bregman-arctan, bregman-log1p or huber.
    #[arg(long)]
    pub rule: String,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Pretty,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

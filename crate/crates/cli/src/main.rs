use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manifold_plm::simulation::DesignKind;
use manifold_plm::ManifoldSpec;

mod commands;
mod output;

use output::CliError;

const CSV_LAYOUT: &str = "Input CSV files have a header row, then one observation per record with \
columns y, x_1..x_p, then the manifold coordinates: d reals for euclidean:d, the 3 embedded \
coordinates for sphere, angle (radians) then height for cylinder:MIN:MAX.";

/// Partially linear regression with covariates on a Riemannian manifold.
#[derive(Debug, Parser)]
#[command(name = "plm-manifold", version, after_help = CSV_LAYOUT)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model to a CSV file and write a JSON report.
    Fit(FitArgs),
    /// Score a bandwidth grid by leave-one-out cross-validation.
    Select(SelectArgs),
    /// Run the Monte Carlo study for a simulation design.
    Simulate(SimulateArgs),
    /// Fit, then predict responses at new covariate rows.
    Predict(PredictArgs),
    /// Split-sample score curves for the model and a fully nonparametric competitor.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV (y, x_1..x_p, coordinates).
    #[arg(long)]
    input: PathBuf,
    /// euclidean:D | sphere | cylinder:MIN:MAX
    #[arg(long)]
    manifold: ManifoldSpec,
    /// Number of linear covariates (inferred from the header when omitted).
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Debug, Args)]
struct BandwidthArgs {
    /// Fixed bandwidth.
    #[arg(long, conflicts_with = "grid")]
    bandwidth: Option<f64>,
    /// Cross-validation grid LO:HI:COUNT (equispaced; prefix with log: for log spacing).
    /// Defaults to 30 log-spaced values from the 5th percentile of pairwise distances.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bw: BandwidthArgs,
    /// Null hypothesis for the Wald test, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta0: Option<Vec<f64>>,
    /// CSV of manifold points at which to evaluate ĝ.
    #[arg(long, requires = "g_output")]
    query: Option<PathBuf>,
    /// Where to write the ĝ evaluations.
    #[arg(long, requires = "query")]
    g_output: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    design: DesignKind,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Cross-validation grid LO:HI:COUNT (default: 30 log-spaced values in [0.05, 0.9π]).
    #[arg(long)]
    grid: Option<String>,
    /// JSON summary path.
    #[arg(long)]
    output: PathBuf,
    /// CSV table row path (default: the JSON path with a .csv extension).
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bw: BandwidthArgs,
    /// CSV of x_1..x_p and coordinates to predict at.
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Bandwidth grid LO:HI:COUNT shared by both models.
    #[arg(long, default_value = "0.1:10:100")]
    grid: String,
    /// CSV with columns h, sv, ep.
    #[arg(long)]
    output: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Fit(a) => commands::run_fit(&a),
        Command::Select(a) => commands::run_select(&a),
        Command::Simulate(a) => commands::run_simulate(&a),
        Command::Predict(a) => commands::run_predict(&a),
        Command::Compare(a) => commands::run_compare(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

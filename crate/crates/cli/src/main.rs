//! `sarme`: measurement-error-corrected SAR estimation from the command line.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 estimation error.
//! Failures print `{"schema":1,"error":{"kind":…,"message":…}}` to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sarme::mecov::Centering;
use sarme::pipeline::{self, ErrorSource, FitRequest, WeightsFormat, WeightsInput};
use sarme::report::error_json;
use sarme::simgen::{self, ExperimentConfig};
use sarme::{DistanceScheme, Method, SarError};

#[derive(Parser)]
#[command(
    name = "sarme",
    version,
    about = "Measurement-error-corrected spatial autoregressive models"
)]
struct Cli {
    /// Worker threads for Monte Carlo runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the corrected QMLE and print a JSON report.
    Fit(FitArgs),
    /// Run a Monte Carlo experiment from a config or bundled preset.
    Simulate(SimulateArgs),
    /// Spectral embedding of a network with per-row covariances.
    Embed(EmbedArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dense,
    Edges,
    Coords,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Brent,
    Newton,
}

#[derive(Args)]
struct WeightsArgs {
    /// Weights file.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Dense)]
    weights_format: Format,
    /// Nearest neighbours for coordinate input.
    #[arg(long, default_value_t = 10, conflicts_with = "cutoff_km")]
    knn: usize,
    /// Distance cutoff in km for coordinate input (replaces kNN).
    #[arg(long)]
    cutoff_km: Option<f64>,
    /// Inverse-distance exponent used with --cutoff-km.
    #[arg(long, default_value_t = 0.0, requires = "cutoff_km")]
    exponent: f64,
}

impl WeightsArgs {
    fn input(&self) -> WeightsInput {
        let scheme = match self.cutoff_km {
            Some(radius_km) => DistanceScheme::Cutoff {
                radius_km,
                exponent: self.exponent,
            },
            None => DistanceScheme::Knn { k: self.knn },
        };
        let format = match self.weights_format {
            Format::Dense => WeightsFormat::Dense,
            Format::Edges => WeightsFormat::Edges,
            Format::Coords => WeightsFormat::Coords,
        };
        WeightsInput {
            path: self.weights.clone(),
            format,
            scheme,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Outcome CSV: one column, or a column named `y`.
    #[arg(long)]
    outcome: PathBuf,
    /// Covariates CSV with a header row.
    #[arg(long)]
    covariates: PathBuf,
    #[command(flatten)]
    weights: WeightsArgs,
    /// Comma-separated error-prone covariate names.
    #[arg(long, value_delimiter = ',')]
    error_prone: Vec<String>,
    /// Known error covariance: shared d1×d1 or stacked n·d1×d1.
    #[arg(long, group = "source")]
    delta: Option<PathBuf>,
    /// Replicates CSV (obs_id,rep_id,cols...).
    #[arg(long, group = "source")]
    replicates: Option<PathBuf>,
    /// Validation CSV with paired true_* and proxy_* columns.
    #[arg(long, group = "source")]
    validation: Option<PathBuf>,
    /// Treat validation proxies as biased: shift by the mean difference.
    #[arg(long, requires = "validation")]
    proxy_bias: bool,
    /// Do not mean-centre validation differences.
    #[arg(long, requires = "validation")]
    uncentered: bool,
    /// Latent positions CSV (from `embed`), used as error-prone covariates.
    #[arg(long, group = "source", requires = "latent_cov")]
    latent: Option<PathBuf>,
    /// Stacked per-row covariances of the latent positions.
    #[arg(long, requires = "latent")]
    latent_cov: Option<PathBuf>,
    /// Lower end of the ρ search interval (default from the spectrum of L).
    #[arg(long, allow_negative_numbers = true)]
    rho_min: Option<f64>,
    /// Upper end of the ρ search interval.
    #[arg(long, allow_negative_numbers = true)]
    rho_max: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Brent)]
    method: MethodArg,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present_any = ["preset", "list_presets"])]
    config: Option<PathBuf>,
    /// Bundled preset name.
    #[arg(long)]
    preset: Option<String>,
    /// List bundled presets and exit.
    #[arg(long)]
    list_presets: bool,
    /// Seed for all randomness.
    #[arg(long, required_unless_present = "list_presets")]
    seed: Option<u64>,
    /// Override the replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory for summary.csv and summary.json.
    #[arg(long, default_value = ".")]
    output: PathBuf,
    /// Also write per-replication estimates to raw.csv.
    #[arg(long)]
    raw: bool,
    /// Write one replication's data as fit inputs instead of running:
    /// `SETTING,REP` (0-based).
    #[arg(long, value_name = "SETTING,REP", value_parser = parse_pair)]
    export_dataset: Option<(usize, usize)>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected SETTING,REP, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((num(a)?, num(b)?))
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    weights: WeightsArgs,
    /// Embedding dimension.
    #[arg(long)]
    dim: usize,
    /// Output prefix: writes <prefix>_uhat.csv and <prefix>_delta.csv.
    #[arg(long)]
    output: PathBuf,
}

fn fit(args: FitArgs) -> Result<(), SarError> {
    let source = if let Some(p) = args.delta {
        ErrorSource::Delta(p)
    } else if let Some(p) = args.replicates {
        ErrorSource::Replicates(p)
    } else if let Some(p) = args.validation {
        let centering = if args.uncentered {
            Centering::Uncentered
        } else {
            Centering::MeanCentered
        };
        ErrorSource::Validation {
            path: p,
            centering,
            proxy_bias: args.proxy_bias,
        }
    } else if let (Some(positions), Some(covariances)) = (args.latent, args.latent_cov) {
        ErrorSource::Latent {
            positions,
            covariances,
        }
    } else {
        ErrorSource::None
    };
    let rho_interval = match (args.rho_min, args.rho_max) {
        (None, None) => None,
        (Some(a), Some(b)) => Some((a, b)),
        _ => {
            return Err(SarError::InvalidConfig {
                path: "rho_interval".into(),
                msg: "give both --rho-min and --rho-max".into(),
            })
        }
    };
    let req = FitRequest {
        outcome: args.outcome,
        covariates: args.covariates,
        weights: args.weights.input(),
        error_prone: args.error_prone,
        source,
        rho_interval,
        method: match args.method {
            MethodArg::Brent => Method::Brent,
            MethodArg::Newton => Method::Newton,
        },
    };
    let json = pipeline::run_fit(&req)?.to_json();
    match args.output {
        Some(path) => std::fs::write(path, json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn simulate(args: SimulateArgs, threads: usize) -> Result<(), SarError> {
    if args.list_presets {
        for name in simgen::preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| SarError::Parse {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => simgen::preset(name)?,
        (None, None) => unreachable!("clap requires a config source"),
    };
    cfg.seed = args.seed.expect("clap requires --seed");
    cfg.threads = threads;
    if let Some(r) = args.reps {
        cfg.n_reps = r;
    }
    cfg.keep_raw = args.raw;
    cfg.validate()?;
    std::fs::create_dir_all(&args.output)?;
    if let Some((setting, rep)) = args.export_dataset {
        let data = simgen::simulate_dataset(&cfg, setting, rep)?;
        for path in pipeline::export_dataset(&data, &args.output)? {
            println!("{}", path.display());
        }
        return Ok(());
    }
    let summary = simgen::run_experiment(&cfg)?;
    std::fs::write(args.output.join("summary.csv"), summary.to_csv())?;
    std::fs::write(args.output.join("summary.json"), summary.to_json())?;
    if let Some(raw) = summary.raw_csv() {
        std::fs::write(args.output.join("raw.csv"), raw)?;
    }
    print!("{}", summary.table());
    println!("elapsed {:.2}s", summary.elapsed_seconds);
    Ok(())
}

fn embed(args: EmbedArgs) -> Result<(), SarError> {
    let emb = pipeline::run_embed(&args.weights.input(), args.dim)?;
    let (u, d) = pipeline::write_embedding(&emb, &args.output)?;
    println!("{}\n{}", u.display(), d.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a, cli.threads),
        Command::Embed(a) => embed(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

//! Command-line driver: simulate datasets, train and evaluate reserve-price
//! predictors, and run replicated experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use ov_reserve::auction::{oracle_revenue, pct_of_max, total_revenue};
use ov_reserve::harness::{
    grid_search, load_dataset, load_predictor, run_experiment, save_dataset, save_predictor,
    EmSettings, ExperimentConfig, Grids, Method, Standardizer,
};
use ov_reserve::simdata::{gen_simulated, split, SimConfig, SimVariant};

#[derive(Parser)]
#[command(name = "ov-reserve", version, about = "Reserve-price learning for second-price auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset file.
    Simulate(SimulateArgs),
    /// Grid-search and fit a predictor on a dataset file.
    Train(TrainArgs),
    /// Score a saved predictor on a dataset file.
    Evaluate(EvaluateArgs),
    /// Run a replicated experiment from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// linear | nonlinear
    #[arg(long, default_value = "linear")]
    variant: String,
    #[arg(long = "n-total", default_value_t = 2000)]
    n_total: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long = "noise-std", default_value_t = 0.1)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset path (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// ov-linear | ov-kernel | ov-neural | nof | zero
    #[arg(long)]
    method: Method,
    /// Input dataset (CSV with header f1,...,fd,B,b).
    #[arg(long)]
    data: PathBuf,
    /// Training config (TOML: split sizes, grids, em settings).
    #[arg(long)]
    config: PathBuf,
    /// Seed for the train/validation split and SGD.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output predictor path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Saved predictor file.
    #[arg(long)]
    predictor: PathBuf,
    /// Dataset to score (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Optional JSON output path for the scores.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Results file path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfig {
    split: TrainSplit,
    #[serde(default)]
    standardize: bool,
    #[serde(default)]
    grids: Grids,
    #[serde(default)]
    em: EmSettings,
}

#[derive(Debug, Deserialize)]
struct TrainSplit {
    n_train: usize,
    n_valid: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Experiment(args) => experiment(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), String> {
    let variant = match args.variant.as_str() {
        "linear" => SimVariant::Linear,
        "nonlinear" => SimVariant::Nonlinear,
        other => return Err(format!("unknown variant {other:?} (linear | nonlinear)")),
    };
    let cfg = SimConfig {
        n_total: args.n_total,
        dim: args.dim,
        noise_std: args.noise_std,
        seed: args.seed,
        variant,
    };
    let data = gen_simulated(&cfg).map_err(|e| e.to_string())?;
    save_dataset(&data, &args.out).map_err(|e| e.to_string())?;
    println!(
        "wrote {} records (dim {}) to {}",
        data.len(),
        data.dim(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let config: TrainConfig = toml::from_str(&text).map_err(|e| e.to_string())?;

    let data = load_dataset(&args.data).map_err(|e| e.to_string())?;
    let (train, valid, _) = split(
        &data,
        config.split.n_train,
        config.split.n_valid,
        0,
        args.seed,
    )
    .map_err(|e| e.to_string())?;

    let (train, valid, standardizer) = if config.standardize {
        let std = Standardizer::fit(&train);
        (std.apply(&train), std.apply(&valid), Some(std))
    } else {
        (train, valid, None)
    };

    let fitted = grid_search(args.method, &config.grids, &config.em, &train, &valid, args.seed)
        .map_err(|e| e.to_string())?;
    save_predictor(&fitted.model, standardizer.as_ref(), &args.out).map_err(|e| e.to_string())?;

    println!(
        "fitted {} (validation revenue {:.4}); chosen {}",
        fitted.model.kind(),
        fitted.valid_revenue,
        serde_json::to_string(&fitted.params).expect("params serialize"),
    );
    println!("saved predictor to {}", args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), String> {
    let saved = load_predictor(&args.predictor).map_err(|e| e.to_string())?;
    let data = load_dataset(&args.data).map_err(|e| e.to_string())?;
    let reserves = saved.predict(&data).map_err(|e| e.to_string())?;
    let revenue = total_revenue(&reserves, &data).map_err(|e| e.to_string())?;
    let oracle = oracle_revenue(&data).map_err(|e| e.to_string())?;
    let pct = pct_of_max(&reserves, &data).map_err(|e| e.to_string())?;

    println!("records        {}", data.len());
    println!("total revenue  {revenue:.6}");
    println!("oracle revenue {oracle:.6}");
    println!("pct of max     {pct:.4}");
    if let Some(out) = args.out {
        let doc = serde_json::json!({
            "records": data.len(),
            "total_revenue": revenue,
            "oracle_revenue": oracle,
            "pct_of_max": pct,
        });
        std::fs::write(&out, format!("{doc:#}\n")).map_err(|e| e.to_string())?;
        println!("wrote scores to {}", out.display());
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut config: ExperimentConfig = toml::from_str(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let report = run_experiment(&config).map_err(|e| e.to_string())?;
    print!("{}", report.table());
    std::fs::write(&args.out, report.to_json()).map_err(|e| e.to_string())?;
    println!("wrote results to {}", args.out.display());
    Ok(())
}

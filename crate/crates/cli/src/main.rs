use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use wic_disagree::{commands, ExperimentConfig, EXIT_DATA_ERROR, EXIT_UNDEFINED};

#[derive(Parser)]
#[command(name = "wic-disagree", version, about = "Annotator-disagreement experiments on WiC data")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Train and predict with one model per language.
    #[arg(long)]
    per_language: bool,

    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics of the training split.
    Stats(Common),
    /// Train the configured method.
    Train(Common),
    /// Predict the test split with trained models.
    Predict(Common),
    /// Score predictions per language.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Gold instances TSV (default: the test split's instances).
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Predictions TSV (default: predictions.tsv in the output directory).
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Cosine-similarity densities per median label.
    PlotDensity(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    config.per_language |= common.per_language;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Stats(common) => {
            let table = commands::stats(&load(&common)?)?;
            print!("{}", table.to_tsv());
        }
        Command::Train(common) => {
            let config = load(&common)?;
            let manifest = commands::train(&config)?;
            for entry in &manifest.models {
                let dir = config.data.output_dir.join(&entry.dir);
                for file in &entry.files {
                    println!("{}", dir.join(file).display());
                }
            }
        }
        Command::Predict(common) => {
            let path = commands::predict(&load(&common)?)?;
            println!("{}", path.display());
        }
        Command::Evaluate { common, gold, pred } => {
            let config = load(&common)?;
            let report = commands::evaluate(&config, gold.as_deref(), pred.as_deref())?;
            print!("{}", report.table(&config.method.to_string()));
            if report.all_undefined() {
                eprintln!("error: {} is undefined for every language", report.metric);
                return Ok(ExitCode::from(EXIT_UNDEFINED));
            }
        }
        Command::PlotDensity(common) => {
            let (path, _) = commands::plot_density(&load(&common)?)?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA_ERROR)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod report;

/// Proprioceptive terrain classification experiments.
#[derive(Parser)]
#[command(name = "terrain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every experiment command. Flags override the config
/// file, which overrides built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// vulpi, borealtc or combined.
    #[arg(long)]
    pub dataset: Option<String>,
    /// cnn or mamba.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results root. Falls back to the config file, then $TERRAIN_OUTPUT_ROOT, then ./results.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Canonical store for Vulpi (overrides data.vulpi).
    #[arg(long)]
    pub vulpi: Option<PathBuf>,
    /// Canonical store for BorealTC (overrides data.borealtc).
    #[arg(long)]
    pub borealtc: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set train.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw dataset into the canonical store and print its manifest summary.
    Ingest {
        /// Dataset root (one directory per terrain).
        #[arg(long)]
        input: PathBuf,
        /// Column and rate mapping (TOML).
        #[arg(long)]
        mapping: PathBuf,
        /// Store directory to write.
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a synthetic store with the class set and rates of a dataset.
    Synth {
        /// vulpi, borealtc or two-class.
        #[arg(long, default_value = "vulpi")]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        recordings_per_class: usize,
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Commanded-velocity statistics per terrain.
    Stats(ExperimentArgs),
    /// Fit one model on every partition and save a checkpoint.
    Train(ExperimentArgs),
    /// k-fold cross-validation with per-terrain metrics.
    Evaluate(ExperimentArgs),
    /// Cross-validation at decreasing training-set sizes, with a log-log plot.
    Ablate(ExperimentArgs),
    /// t-SNE projection of partition embeddings.
    Embed {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Embed with a saved checkpoint instead of training a fresh model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render tables and plots from stored results (no recomputation).
    Report {
        /// Results directory to scan.
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { input, mapping, output } => commands::ingest(&input, &mapping, &output),
        Command::Synth { dataset, seed, recordings_per_class, duration, output } => {
            commands::synth(&dataset, seed, recordings_per_class, duration, &output)
        }
        Command::Stats(a) => commands::stats(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Embed { args, checkpoint } => commands::embed(&args, checkpoint.as_deref()),
        Command::Report { input } => report::run(&input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

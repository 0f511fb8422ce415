//! `gpnas`: synthesize, train, tune, predict, evaluate and ablate.
//!
//! Failures print one line `error[<kind>]: <message>` on stderr and exit with
//! 2 (usage), 3 (data) or 4 (numerical).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpnas_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "gpnas", version, about = "Small-sample architecture performance predictor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic ranking task and its ground-truth sidecar.
    Synth(SynthArgs),
    /// Fit an ensemble model per dataset.
    Train(TrainArgs),
    /// Tune the weighted-kernel diagonal and write the updated config.
    Tune(TuneArgs),
    /// Score and rank every record of a dataset with a trained model.
    Predict(PredictArgs),
    /// Kendall tau of predictions against ground truth, per task and mean.
    Evaluate(EvaluateArgs),
    /// Run the cumulative ablation ladder over seeded splits.
    Ablate(AblateArgs),
    /// Print a preset (or config file) as JSON.
    ShowConfig {
        #[arg(long, default_value = "task0")]
        config: String,
    },
}

#[derive(Args)]
struct DataOptions {
    /// Label column meaning for CSV input.
    #[arg(long, value_enum, default_value_t = LabelArg::Rank)]
    label_kind: LabelArg,
    /// Feature cardinalities, comma separated; a single value applies to
    /// every column. Defaults to what the file declares or observed max + 1.
    #[arg(long, value_delimiter = ',')]
    cardinalities: Vec<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    Rank,
    Score,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    cardinality: u32,
    /// Label noise as a fraction of the clean signal's standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Number of leading columns that carry signal (default: all).
    #[arg(long)]
    informative: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    interaction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset path (`.csv` or `.json`).
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar; defaults to `<out stem>.truth.csv`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset; repeat for several tasks.
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// Preset name or config path; one for all tasks or one per dataset.
    #[arg(long = "config", default_value = "task0")]
    config: Vec<String>,
    /// Model path; one per dataset.
    #[arg(long = "out", required = true)]
    out: Vec<PathBuf>,
    /// Accepted for interface symmetry; training is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    data_options: DataOptions,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Validation,
    Training,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "task0")]
    config: String,
    /// Updated config path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    budget: usize,
    #[arg(long, default_value_t = 10)]
    init_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Validation)]
    objective: ObjectiveArg,
    /// Upper bound of every weight (lower bound is 0).
    #[arg(long, default_value_t = 1.0)]
    upper: f64,
    /// Also write the full search trace as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    data_options: DataOptions,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// CSV with columns `index,score,rank`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = LabelArg::Rank)]
    label_kind: LabelArg,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction CSV from `predict`; repeat for several tasks.
    #[arg(long = "predictions", required = true)]
    predictions: Vec<PathBuf>,
    /// Truth file per prediction file: a sidecar (`index,score`), a
    /// prediction-style file, or a labelled dataset.
    #[arg(long = "truth", required = true)]
    truth: Vec<PathBuf>,
    /// How dataset labels are read when the truth is a dataset.
    #[arg(long, value_enum, default_value_t = LabelArg::Rank)]
    label_kind: LabelArg,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "task0")]
    config: String,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tuning budget for the last rung.
    #[arg(long, default_value_t = 60)]
    budget: usize,
    /// Keep the config's weights for the last rung instead of tuning.
    #[arg(long)]
    no_tune: bool,
    /// Also write the ladder as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data_options: DataOptions,
}

/// Failure reported to the user; `kind` picks the exit code.
pub struct Failure {
    kind: ErrorKind,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Failure {
        Failure { kind: ErrorKind::Usage, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure { kind: e.kind(), message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return report(Failure::usage(first.trim_start_matches("error: ")));
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Tune(a) => commands::tune(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::ShowConfig { config } => commands::show_config(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let (tag, code) = match f.kind {
        ErrorKind::Usage => ("usage", 2),
        ErrorKind::Data => ("data", 3),
        ErrorKind::Numerical => ("numerical", 4),
    };
    let message = f.message.replace(['\n', '\r'], " ");
    eprintln!("error[{tag}]: {message}");
    ExitCode::from(code)
}

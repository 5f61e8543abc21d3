//! Command-line entry point: one subcommand per pipeline stage.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "deephhf", version, about = "Heart-failure risk from day-long Holter ECG")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort: recordings, EMR tables and planted truth.
    Synth(SynthArgs),
    /// Label exams found in a recordings directory against EMR diagnoses.
    Label(LabelArgs),
    /// Assign train/validation/test splits, stratified by patient.
    Split(SplitArgs),
    /// Step 1: train the window encoder.
    TrainEncoder(TrainArgs),
    /// Step 2: train the sequential head on a frozen encoder.
    TrainHead(TrainHeadArgs),
    /// Score recordings with a trained model.
    Score(ScoreArgs),
    /// Attention rollout profiles, time-of-day density and beat clusters.
    Explain(ExplainArgs),
    /// PCP-HF baseline risk from EMR covariates and QRS duration.
    Pcphf(PcphfArgs),
    /// Discrimination metrics and risk groups for a score file.
    Evaluate(EvaluateArgs),
    /// Survival by risk group, odds ratios and screening numbers.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Total exam count, split 4:1:2 into train/validation/test.
    #[arg(long, conflicts_with_all = ["n_train", "n_val", "n_test"])]
    n: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    pos_frac: Option<f64>,
    #[arg(long)]
    bursts_per_day: Option<f64>,
    #[arg(long)]
    burst_minutes: Option<f64>,
    #[arg(long)]
    af_prob: Option<f64>,
    #[arg(long)]
    noise_uv: Option<f64>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    recordings: PathBuf,
    #[arg(long)]
    emr: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    val_frac: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Small model and short schedules for a single CPU core.
    Desk,
    /// Full-size model and schedules.
    Full,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    recordings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Base settings before the config file and flags are applied.
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    /// `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Validation aggregation of window logits: mean_logit, mean_prob or max.
    #[arg(long)]
    aggregation: Option<String>,
}

#[derive(Args)]
struct TrainHeadArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Encoder checkpoint from `train-encoder`.
    #[arg(long)]
    encoder: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SplitSel {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    recordings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitSel,
    /// Score with the encoder alone, aggregating window logits.
    #[arg(long)]
    encoder_only: bool,
    #[arg(long, default_value = "mean_logit")]
    aggregation: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    recordings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitSel,
    #[arg(long, default_value_t = 0.9)]
    discard_ratio: f64,
    /// Apply the discard after adding the identity instead of before.
    #[arg(long)]
    discard_after_identity: bool,
    /// Count each position's relevance to its own pooled token.
    #[arg(long)]
    keep_self: bool,
    #[arg(long, default_value_t = 30)]
    bin_minutes: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcphfArgs {
    #[arg(long)]
    recordings: PathBuf,
    #[arg(long)]
    emr: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Coefficient table; the bundled placeholder is used when absent.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitSel,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Second score file to compare against (bootstrap t-test).
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitSel,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Defaults to the directory holding the score file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    emr: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitSel,
    /// Odds-ratio horizon in days after the exam.
    #[arg(long, default_value_t = 1826.0)]
    horizon_days: f64,
    /// Incidence rate ratio of the intervention used for screening numbers.
    #[arg(long, default_value_t = 0.6)]
    irr: f64,
    /// End of follow-up; defaults to the latest EMR event.
    #[arg(long)]
    censor_date: Option<chrono::NaiveDate>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

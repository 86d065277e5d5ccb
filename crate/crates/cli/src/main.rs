//! `oraldx`: every workflow of the diagnostic engine from the shell.
//!
//! Human summaries go to stdout; machine-readable output goes to the
//! `--out` path of each command.

mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "oraldx",
    version,
    about = "Hierarchical oral disease diagnosis engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Diagnose one case in Fast or Standard Mode.
    Diagnose(DiagnoseArgs),
    /// Per-class augmentation targets from a counts CSV.
    PlanAug(PlanAugArgs),
    /// Stratified train/val/test split of a manifest.
    Partition(PartitionArgs),
    /// Generate a synthetic corpus with a demo case and dialogue script.
    Synth(SynthArgs),
    /// Train heads on a synthetic corpus and write a model directory.
    Train(TrainArgs),
    /// Zone report from a prediction log or a published table.
    Eval(EvalArgs),
    /// Write the disease atlas of a model directory.
    Atlas(AtlasArgs),
    /// Run the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[group(id = "mode", required = true, multiple = false)]
struct ModeFlags {
    /// Single pass over all 118 diseases.
    #[arg(long)]
    fast: bool,
    /// Level-by-level reasoning with clarification questions.
    #[arg(long)]
    standard: bool,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    mode: ModeFlags,
    /// JSON file with `case_text` and `image_features`.
    #[arg(long)]
    case: PathBuf,
    /// TOML dialogue script; without it questions are read from stdin.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Diseases to report, primary included.
    #[arg(long)]
    top_k: Option<usize>,
    /// Overrides the gate threshold of the model directory.
    #[arg(long)]
    threshold: Option<f64>,
    /// Also write the result as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanAugArgs {
    /// CSV with header `disease_id,n_initial`.
    #[arg(long)]
    counts: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    a: f64,
    #[arg(long, default_value_t = 2.0)]
    b: f64,
    /// Plan CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PartitionArgs {
    /// JSON Lines manifest.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, val and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.2, 0.1])]
    ratios: Vec<f64>,
    /// Partitioned manifest destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    zone2_overlap: Option<f64>,
    #[arg(long)]
    zone1_noise_boost: Option<f64>,
    /// Directory for `manifest.jsonl`, `olp_case.json` and `olp_script.toml`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML training configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured corpus seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides the configured cases per disease.
    #[arg(long)]
    per_class: Option<usize>,
    /// Also evaluate Standard Mode with oracle answers.
    #[arg(long)]
    standard: bool,
    /// Model directory to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
struct EvalSource {
    /// Prediction log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Published table CSV (`mode,zone,n,accuracy`).
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    source: EvalSource,
    /// Report JSON destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AtlasArgs {
    #[arg(long)]
    model: PathBuf,
    /// Atlas JSON destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Event log and snapshot directory; nothing persists without it.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Seconds of inactivity before a session is dropped.
    #[arg(long, default_value_t = 3600)]
    idle_timeout: u64,
    #[arg(long)]
    threshold: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Diagnose(a) => commands::diagnose(a),
        Command::PlanAug(a) => commands::plan_aug(a),
        Command::Partition(a) => commands::partition(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Atlas(a) => commands::atlas(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

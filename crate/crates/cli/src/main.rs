mod common;
mod live;
mod offline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::{Ctx, UsageError};

/// EEG pain classification: offline pipeline and streaming runtime.
#[derive(Debug, Parser)]
#[command(name = "nocisense", version)]
struct Cli {
    /// Base directory for relative paths.
    #[arg(long, global = true, env = "NOCISENSE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse BrainVision recordings into a stimulus-locked epoch cache.
    Ingest(offline::IngestArgs),
    /// Filter, resample, mask bad channels and reject artifact epochs.
    Preprocess(offline::PreprocessArgs),
    /// Extract 537-slot feature vectors from an epoch cache.
    Featurize(offline::FeaturizeArgs),
    /// Fit one classifier on a feature file.
    Train(offline::TrainArgs),
    /// Leave-one-participant-out evaluation.
    Evaluate(offline::EvaluateArgs),
    /// Permutation feature importance.
    Importance(offline::ImportanceArgs),
    /// Generate a synthetic epoch cache with planted pain signatures.
    Synth(offline::SynthArgs),
    /// Classify a recording replayed as a live stream.
    Replay(live::ReplayArgs),
    /// Classify frames from a stream producer.
    Stream(live::StreamArgs),
    /// Run the loop and publish events to subscribers.
    Serve(live::ServeArgs),
    /// Produce a synthetic frame stream, or stream training windows.
    SynthStream(live::SynthStreamArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let ctx = Ctx { data_dir: cli.data_dir, seed: cli.seed };
    let result = match &cli.command {
        Command::Ingest(a) => offline::ingest(&ctx, a),
        Command::Preprocess(a) => offline::preprocess(&ctx, a),
        Command::Featurize(a) => offline::featurize(&ctx, a),
        Command::Train(a) => offline::train(&ctx, a),
        Command::Evaluate(a) => offline::evaluate(&ctx, a),
        Command::Importance(a) => offline::importance(&ctx, a),
        Command::Synth(a) => offline::synth(&ctx, a),
        Command::Replay(a) => live::replay(&ctx, a),
        Command::Stream(a) => live::stream(&ctx, a),
        Command::Serve(a) => live::serve(&ctx, a),
        Command::SynthStream(a) => live::synth_stream_cmd(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nrun with --help for usage");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Command-line front end for the layer-fusion mapper: score strategies,
//! search for them, build teacher datasets, and train/apply the learned
//! mapper. Every file-writing subcommand drops a manifest.json capturing the
//! resolved configuration, seeds, and input hashes.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

#[derive(Parser)]
#[command(
    name = "fusemap",
    version,
    about = "Layer-fusion mapping toolkit: analytical cost model, teacher search, learned mapper"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Score a strategy file against a workload.
    Eval(commands::eval::EvalArgs),
    /// Search for a fast strategy (ga, random, or exhaustive).
    Search(commands::search::SearchArgs),
    /// Build a teacher demonstration dataset (JSONL).
    Dataset(commands::dataset::DatasetArgs),
    /// Train the sequence model on a dataset.
    Train(commands::train::TrainArgs),
    /// Decode a strategy from a trained model in one pass, no search.
    Infer(commands::infer::InferArgs),
    /// Continue training a checkpoint on a new workload's dataset.
    Finetune(commands::train::FinetuneArgs),
    /// Benchmark mapping methods side by side on one workload.
    Compare(commands::compare::CompareArgs),
    /// Verify analytic gradients against finite differences.
    GradCheck(commands::gradcheck::GradCheckArgs),
    /// List the built-in workloads.
    ZooList,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Eval(a) => commands::eval::run(a),
        Command::Search(a) => commands::search::run(a),
        Command::Dataset(a) => commands::dataset::run(a),
        Command::Train(a) => commands::train::run_train(a),
        Command::Infer(a) => commands::infer::run(a),
        Command::Finetune(a) => commands::train::run_finetune(a),
        Command::Compare(a) => commands::compare::run(a),
        Command::GradCheck(a) => commands::gradcheck::run(a),
        Command::ZooList => commands::zoo::run(),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use fusemap_core::costmodel::{no_fusion_report, AcceleratorConfig};
use fusemap_core::parallel::Executor;
use fusemap_core::search::{
    brute_force_in, ga_search_in, random_search_in, GaConfig, SearchResult,
};

use crate::args::{load_workload, parse_bytes, AccelArgs};
use crate::manifest::{write_json, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Algo {
    Ga,
    Random,
    Brute,
}

#[derive(Debug, clap::Args)]
pub struct SearchArgs {
    /// Workload: a JSON file, builtin:NAME, or a bare builtin name.
    pub workload: String,
    #[command(flatten)]
    pub accel: AccelArgs,
    #[arg(long, value_enum, default_value_t = Algo::Ga)]
    pub algo: Algo,
    /// Memory budget; defaults to --buffer.
    #[arg(long, value_parser = parse_bytes)]
    pub budget: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub batch: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub population: usize,
    #[arg(long, default_value_t = 50)]
    pub generations: usize,
    /// Evaluation budget for --algo random.
    #[arg(long, default_value_t = 2000)]
    pub samples: u64,
    /// Where strategy.json, history.csv, result.json, and the manifest go.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn history_csv(result: &SearchResult) -> String {
    let mut csv = String::from("generation,best_latency_seconds,best_peak_bytes\n");
    for g in &result.history {
        writeln!(csv, "{},{},{}", g.generation, g.best_latency_seconds, g.best_peak_bytes)
            .expect("writing to a string cannot fail");
    }
    csv
}

pub fn run(args: &SearchArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let (workload, workload_path) = load_workload(&args.workload)?;
    let budget = args.budget.unwrap_or(args.accel.buffer);
    let accel = AcceleratorConfig { onchip_buffer: budget, ..args.accel.to_config() };
    let executor = Executor::auto();

    let result = match args.algo {
        Algo::Ga => {
            let cfg = GaConfig {
                population: args.population,
                generations: args.generations,
                seed: args.seed,
                ..GaConfig::default()
            };
            ga_search_in(&executor, &workload, args.batch, &accel, &cfg)?
        }
        Algo::Random => random_search_in(
            &executor,
            &workload,
            args.batch,
            &accel,
            args.samples,
            args.seed,
            None,
        )?,
        Algo::Brute => brute_force_in(&executor, &workload, args.batch, &accel, None)
            .context("exhaustive search refused")?,
    };

    std::fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join("strategy.json"), &result.best)?;
    std::fs::write(args.out_dir.join("history.csv"), history_csv(&result))?;
    // Wall time lives in the manifest so result.json is reproducible.
    let mut result_json = serde_json::to_value(&result)?;
    result_json.as_object_mut().expect("object").remove("wall_time_seconds");
    write_json(&args.out_dir.join("result.json"), &result_json)?;

    let baseline = no_fusion_report(&workload, args.batch, &accel)?;
    let speedup = result.best_report.speedup_over(&baseline);
    println!(
        "{}: latency {:.6e} s, peak {} bytes ({}), speedup {speedup:.3}x over no-fusion, {} samples",
        workload.name,
        result.best_report.latency_seconds,
        result.best_report.peak_buffer_bytes,
        if result.best_report.valid { "valid" } else { "over budget" },
        result.samples_used,
    );

    let mut manifest = RunManifest::new(serde_json::json!({
        "workload": workload.name,
        "algo": format!("{:?}", args.algo).to_lowercase(),
        "batch": args.batch,
        "budget_bytes": budget,
        "population": args.population,
        "generations": args.generations,
        "samples": args.samples,
        "accelerator": accel,
        "threads": executor.threads(),
    }));
    manifest.seed("search", args.seed);
    if let Some(p) = &workload_path {
        manifest.input(p)?;
    }
    for name in ["strategy.json", "history.csv", "result.json"] {
        manifest.outputs.push(args.out_dir.join(name).display().to_string());
    }
    manifest.timing("search_seconds", result.wall_time_seconds);
    manifest.write(&args.out_dir, start)?;
    Ok(ExitCode::SUCCESS)
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use fusemap_core::parallel::Executor;
use fusemap_core::search::GaConfig;
use fusemap_core::seqmodel::{gen_dataset, write_dataset, NormConstants};

use crate::args::{load_workload, parse_bytes, AccelArgs};
use crate::manifest::RunManifest;

#[derive(Debug, clap::Args)]
pub struct DatasetArgs {
    /// One or more workloads (JSON files or builtin names).
    #[arg(required = true)]
    pub workloads: Vec<String>,
    #[command(flatten)]
    pub accel: AccelArgs,
    /// Teacher search runs once per (workload, budget) cell.
    #[arg(long, value_delimiter = ',', value_parser = parse_bytes,
          default_value = "16MiB,32MiB,48MiB,64MiB")]
    pub budgets: Vec<u64>,
    /// Distinct valid elites kept per cell.
    #[arg(long, default_value_t = 8)]
    pub top_k: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub population: usize,
    #[arg(long, default_value_t = 50)]
    pub generations: usize,
    /// Where dataset.jsonl and the manifest go.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &DatasetArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let mut workloads = Vec::new();
    let mut sources = Vec::new();
    for spec in &args.workloads {
        let (w, path) = load_workload(spec)?;
        workloads.push(w);
        sources.extend(path);
    }
    let accel = args.accel.to_config();
    let norm = NormConstants::default();
    let ga = GaConfig {
        population: args.population,
        generations: args.generations,
        ..GaConfig::default()
    };
    let executor = Executor::auto();

    let build = gen_dataset(
        &executor,
        &workloads,
        args.batch,
        &args.budgets,
        &accel,
        &ga,
        args.top_k,
        args.seed,
        &norm,
    )?;
    for (name, budget) in &build.skipped {
        eprintln!("warning: {name} @ {budget} bytes: teacher found no valid strategy; budget skipped");
    }

    std::fs::create_dir_all(&args.out_dir)?;
    let out = args.out_dir.join("dataset.jsonl");
    write_dataset(&out, &build.trajectories)?;
    println!(
        "{} trajectories from {} workloads x {} budgets ({} cells skipped, {} teacher samples)",
        build.trajectories.len(),
        workloads.len(),
        args.budgets.len(),
        build.skipped.len(),
        build.samples_used,
    );

    let mut manifest = RunManifest::new(serde_json::json!({
        "workloads": workloads.iter().map(|w| w.name.clone()).collect::<Vec<_>>(),
        "batch": args.batch,
        "budgets_bytes": args.budgets,
        "top_k": args.top_k,
        "population": args.population,
        "generations": args.generations,
        "accelerator": accel,
        "normalization": norm,
        "threads": executor.threads(),
    }));
    manifest.seed("dataset", args.seed);
    for p in &sources {
        manifest.input(p)?;
    }
    manifest.outputs.push(out.display().to_string());
    manifest.write(&args.out_dir, start)?;
    Ok(ExitCode::SUCCESS)
}

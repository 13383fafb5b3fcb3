use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use fusemap_core::costmodel::{evaluate, AcceleratorConfig, CostReport};
use fusemap_core::parallel::Executor;
use fusemap_core::search::{ga_search_in, random_search_in, GaConfig};
use fusemap_core::seqmodel::load_checkpoint;
use fusemap_core::strategy::{action_space, Action, Strategy};
use fusemap_core::workload::Workload;

use crate::args::{load_workload, parse_bytes, AccelArgs};
use crate::manifest::RunManifest;

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    /// Workload: a JSON file, builtin:NAME, or a bare builtin name.
    pub workload: String,
    #[command(flatten)]
    pub accel: AccelArgs,
    /// Memory budget; defaults to --buffer.
    #[arg(long, value_parser = parse_bytes)]
    pub budget: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub batch: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Evaluation budget for the random baseline.
    #[arg(long, default_value_t = 2000)]
    pub samples: u64,
    #[arg(long, default_value_t = 40)]
    pub population: usize,
    #[arg(long, default_value_t = 50)]
    pub generations: usize,
    /// Add a learned-mapper row decoded from this checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write compare.csv and a manifest here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

struct Row {
    method: &'static str,
    latency_seconds: f64,
    peak_bytes: u64,
    speedup: f64,
    samples: u64,
    wall_time_seconds: f64,
}

/// Largest uniform staging that fits the budget; falls back to the finest
/// one when nothing fits. Returns the report plus evaluations spent.
fn best_uniform(
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
) -> Result<(CostReport, u64)> {
    let mut stagings: Vec<u64> = action_space(batch)
        .into_iter()
        .filter_map(|a| match a {
            Action::MicroBatch(m) => Some(m),
            Action::Sync => None,
        })
        .collect();
    stagings.sort_by_key(|&m| std::cmp::Reverse(m));
    let mut samples = 0;
    let mut last = None;
    for m in stagings {
        let report = evaluate(workload, &Strategy::uniform(workload.num_layers(), m), batch, accel)?;
        samples += 1;
        let valid = report.valid;
        last = Some(report);
        if valid {
            break;
        }
    }
    Ok((last.expect("action space always offers a micro-batch"), samples))
}

pub fn run(args: &CompareArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let (workload, workload_path) = load_workload(&args.workload)?;
    let budget = args.budget.unwrap_or(args.accel.buffer);
    let accel = AcceleratorConfig { onchip_buffer: budget, ..args.accel.to_config() };
    let executor = Executor::auto();
    let n = workload.num_layers();
    let mut rows = Vec::new();

    let t0 = Instant::now();
    let baseline = evaluate(&workload, &Strategy::no_fusion(n, args.batch), args.batch, &accel)?;
    rows.push(Row {
        method: "no_fusion",
        latency_seconds: baseline.latency_seconds,
        peak_bytes: baseline.peak_buffer_bytes,
        speedup: 1.0,
        samples: 1,
        wall_time_seconds: t0.elapsed().as_secs_f64(),
    });

    let t0 = Instant::now();
    let (uniform, samples) = best_uniform(&workload, args.batch, &accel)?;
    rows.push(Row {
        method: "uniform",
        latency_seconds: uniform.latency_seconds,
        peak_bytes: uniform.peak_buffer_bytes,
        speedup: baseline.latency_seconds / uniform.latency_seconds,
        samples,
        wall_time_seconds: t0.elapsed().as_secs_f64(),
    });

    let random = random_search_in(
        &executor,
        &workload,
        args.batch,
        &accel,
        args.samples,
        args.seed,
        None,
    )?;
    rows.push(Row {
        method: "random",
        latency_seconds: random.best_report.latency_seconds,
        peak_bytes: random.best_report.peak_buffer_bytes,
        speedup: baseline.latency_seconds / random.best_report.latency_seconds,
        samples: random.samples_used,
        wall_time_seconds: random.wall_time_seconds,
    });

    let ga_cfg = GaConfig {
        population: args.population,
        generations: args.generations,
        seed: args.seed,
        ..GaConfig::default()
    };
    let ga = ga_search_in(&executor, &workload, args.batch, &accel, &ga_cfg)?;
    rows.push(Row {
        method: "ga",
        latency_seconds: ga.best_report.latency_seconds,
        peak_bytes: ga.best_report.peak_buffer_bytes,
        speedup: baseline.latency_seconds / ga.best_report.latency_seconds,
        samples: ga.samples_used,
        wall_time_seconds: ga.wall_time_seconds,
    });

    if let Some(path) = &args.model {
        let (model, meta) = load_checkpoint(path)
            .with_context(|| format!("loading checkpoint '{}'", path.display()))?;
        let t0 = Instant::now();
        let out = fusemap_core::seqmodel::infer(
            &model,
            &workload,
            args.batch,
            budget,
            &accel,
            &meta.norm,
        )?;
        rows.push(Row {
            method: "model",
            latency_seconds: out.report.latency_seconds,
            peak_bytes: out.report.peak_buffer_bytes,
            speedup: baseline.latency_seconds / out.report.latency_seconds,
            samples: out.samples_used,
            wall_time_seconds: t0.elapsed().as_secs_f64(),
        });
    }

    println!(
        "{:<10} {:>14} {:>14} {:>9} {:>9} {:>11}",
        "method", "latency_s", "peak_bytes", "speedup", "samples", "wall_s"
    );
    for r in &rows {
        println!(
            "{:<10} {:>14.6e} {:>14} {:>9.3} {:>9} {:>11.4}",
            r.method, r.latency_seconds, r.peak_bytes, r.speedup, r.samples, r.wall_time_seconds
        );
    }

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        let mut csv =
            String::from("method,latency_seconds,peak_bytes,speedup,samples,wall_time_seconds\n");
        for r in &rows {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.method, r.latency_seconds, r.peak_bytes, r.speedup, r.samples, r.wall_time_seconds
            )
            .expect("writing to a string cannot fail");
        }
        std::fs::write(dir.join("compare.csv"), csv)?;
        let mut manifest = RunManifest::new(serde_json::json!({
            "workload": workload.name,
            "batch": args.batch,
            "budget_bytes": budget,
            "samples": args.samples,
            "population": args.population,
            "generations": args.generations,
            "accelerator": accel,
            "threads": executor.threads(),
        }));
        manifest.seed("compare", args.seed);
        if let Some(p) = &workload_path {
            manifest.input(p)?;
        }
        if let Some(p) = &args.model {
            manifest.input(p)?;
        }
        manifest.outputs.push(dir.join("compare.csv").display().to_string());
        manifest.write(dir, start)?;
    }
    Ok(ExitCode::SUCCESS)
}

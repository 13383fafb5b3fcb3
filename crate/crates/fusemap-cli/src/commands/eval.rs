use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use fusemap_core::costmodel::{evaluate, no_fusion_report, AcceleratorConfig};
use fusemap_core::strategy::Strategy;

use crate::args::{load_workload, parse_bytes, AccelArgs};
use crate::manifest::{write_json, RunManifest};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Workload: a JSON file, builtin:NAME, or a bare builtin name.
    pub workload: String,
    /// Strategy file: a JSON array of actions (-1 = sync, m = micro-batch).
    pub strategy: PathBuf,
    #[command(flatten)]
    pub accel: AccelArgs,
    /// Memory budget for the validity check; defaults to --buffer.
    #[arg(long, value_parser = parse_bytes)]
    pub budget: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub batch: u64,
    /// Also write report.json and a manifest here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(args: &EvalArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let (workload, workload_path) = load_workload(&args.workload)?;
    let text = std::fs::read_to_string(&args.strategy)
        .with_context(|| format!("reading strategy file '{}'", args.strategy.display()))?;
    let strategy: Strategy = serde_json::from_str(&text)
        .with_context(|| format!("parsing strategy file '{}'", args.strategy.display()))?;
    strategy
        .validate(workload.num_layers(), args.batch)
        .with_context(|| format!("strategy does not fit '{}' at batch {}", workload.name, args.batch))?;

    let budget = args.budget.unwrap_or(args.accel.buffer);
    let accel = AcceleratorConfig { onchip_buffer: budget, ..args.accel.to_config() };
    let report = evaluate(&workload, &strategy, args.batch, &accel)?;
    let baseline = no_fusion_report(&workload, args.batch, &accel)?;

    let mut json = serde_json::to_value(&report)?;
    let fields = json.as_object_mut().expect("report serializes to an object");
    fields.insert("speedup".into(), report.speedup_over(&baseline).into());
    println!("{}", serde_json::to_string_pretty(&json)?);

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), &json)?;
        let mut manifest = RunManifest::new(serde_json::json!({
            "workload": workload.name,
            "batch": args.batch,
            "budget_bytes": budget,
            "accelerator": accel,
        }));
        if let Some(p) = &workload_path {
            manifest.input(p)?;
        }
        manifest.input(&args.strategy)?;
        manifest.outputs.push(dir.join("report.json").display().to_string());
        manifest.write(dir, start)?;
    }

    Ok(if report.valid { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use fusemap_core::costmodel::no_fusion_report;
use fusemap_core::seqmodel::load_checkpoint;

use crate::args::{load_workload, parse_bytes, AccelArgs};
use crate::manifest::{write_json, RunManifest};

#[derive(Debug, clap::Args)]
pub struct InferArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Workload: a JSON file, builtin:NAME, or a bare builtin name.
    pub workload: String,
    #[command(flatten)]
    pub accel: AccelArgs,
    /// Memory budget to condition on; defaults to --buffer.
    #[arg(long, value_parser = parse_bytes)]
    pub budget: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub batch: u64,
    /// Also write strategy.json, result.json, and a manifest here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(args: &InferArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let (model, meta) = load_checkpoint(&args.model)
        .with_context(|| format!("loading checkpoint '{}'", args.model.display()))?;
    let (workload, workload_path) = load_workload(&args.workload)?;
    let budget = args.budget.unwrap_or(args.accel.buffer);
    if let (Some(lo), Some(hi)) =
        (meta.training.budgets_seen.iter().min(), meta.training.budgets_seen.iter().max())
    {
        if budget < *lo || budget > *hi {
            eprintln!(
                "warning: budget {budget} bytes is outside the trained range [{lo}, {hi}]; \
                 extrapolation is untested"
            );
        }
    }

    let accel = args.accel.to_config();
    let out = fusemap_core::seqmodel::infer(&model, &workload, args.batch, budget, &accel, &meta.norm)?;
    let baseline = no_fusion_report(&workload, args.batch, &accel)?;
    let speedup = out.report.speedup_over(&baseline);

    // Timing-free result for reproducible artifacts; stdout carries the
    // measured split between model time and cost-model time.
    let result = serde_json::json!({
        "strategy": out.strategy,
        "report": out.report,
        "speedup": speedup,
        "samples_used": out.samples_used,
    });
    let mut with_timing = result.clone();
    let fields = with_timing.as_object_mut().expect("object");
    fields.insert("model_seconds".into(), out.model_seconds.into());
    fields.insert("costmodel_seconds".into(), out.costmodel_seconds.into());
    println!("{}", serde_json::to_string_pretty(&with_timing)?);

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("strategy.json"), &out.strategy)?;
        write_json(&dir.join("result.json"), &result)?;
        let mut manifest = RunManifest::new(serde_json::json!({
            "workload": workload.name,
            "batch": args.batch,
            "budget_bytes": budget,
            "accelerator": accel,
            "model": meta.config,
        }));
        manifest.input(&args.model)?;
        if let Some(p) = &workload_path {
            manifest.input(p)?;
        }
        for name in ["strategy.json", "result.json"] {
            manifest.outputs.push(dir.join(name).display().to_string());
        }
        manifest.timing("model_seconds", out.model_seconds);
        manifest.timing("costmodel_seconds", out.costmodel_seconds);
        manifest.write(dir, start)?;
    }
    Ok(ExitCode::SUCCESS)
}

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fusemap_core::seqmodel::{
    read_dataset, save_checkpoint, train, CheckpointMeta, Lineage, Model, ModelConfig,
    NormConstants, TrainConfig, TrainStats, TrainingMeta, Trajectory,
};

use crate::manifest::{sha256_file, RunManifest};

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Trajectory dataset (JSONL) from the dataset subcommand.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub minibatch: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    #[arg(long, default_value_t = 64)]
    pub max_timesteps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Where model.ckpt, loss.csv, and the manifest go.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct FinetuneArgs {
    /// Checkpoint to continue from.
    #[arg(long)]
    pub parent: PathBuf,
    /// Trajectory dataset (JSONL) for the new workload.
    #[arg(long)]
    pub data: PathBuf,
    /// Training length as a fraction of the parent's epoch count.
    #[arg(long, default_value_t = 0.10)]
    pub epoch_fraction: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub minibatch: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Where model.ckpt, loss.csv, and the manifest go.
    #[arg(long)]
    pub out_dir: PathBuf,
}

struct DataSummary {
    batch: u64,
    budgets: Vec<u64>,
    workloads: Vec<String>,
    longest: usize,
}

fn summarize(data: &[Trajectory]) -> Result<DataSummary> {
    let batches: BTreeSet<u64> = data.iter().map(|t| t.meta.batch).collect();
    if batches.len() > 1 {
        bail!("dataset mixes batch sizes {batches:?}; train on one batch size at a time");
    }
    Ok(DataSummary {
        batch: *batches.iter().next().expect("dataset is non-empty"),
        budgets: data.iter().map(|t| t.meta.budget_bytes).collect::<BTreeSet<_>>().into_iter().collect(),
        workloads: data
            .iter()
            .map(|t| t.meta.workload.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        longest: data.iter().map(|t| t.timesteps()).max().expect("dataset is non-empty"),
    })
}

fn loss_csv(stats: &TrainStats) -> String {
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in stats.epoch_losses.iter().enumerate() {
        writeln!(csv, "{epoch},{loss}").expect("writing to a string cannot fail");
    }
    csv
}

fn check_finite(stats: &TrainStats) -> Result<()> {
    if let Some(epoch) = stats.epoch_losses.iter().position(|l| !l.is_finite()) {
        bail!("loss became non-finite at epoch {epoch}; lower --lr or raise --minibatch");
    }
    Ok(())
}

fn loss_tail(stats: &TrainStats) -> Vec<f64> {
    let n = stats.epoch_losses.len();
    stats.epoch_losses[n.saturating_sub(5)..].to_vec()
}

fn write_artifacts(
    out_dir: &Path,
    model: &mut Model,
    meta: &CheckpointMeta,
    stats: &TrainStats,
    mut manifest: RunManifest,
    start: Instant,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    save_checkpoint(&out_dir.join("model.ckpt"), model, meta)?;
    std::fs::write(out_dir.join("loss.csv"), loss_csv(stats))?;
    for name in ["model.ckpt", "loss.csv"] {
        manifest.outputs.push(out_dir.join(name).display().to_string());
    }
    manifest.write(out_dir, start)
}

pub fn run_train(args: &TrainArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let data = read_dataset(&args.data)
        .with_context(|| format!("loading dataset '{}'", args.data.display()))?;
    let summary = summarize(&data)?;
    if summary.longest > args.max_timesteps {
        bail!(
            "longest trajectory has {} steps but --max-timesteps is {}",
            summary.longest,
            args.max_timesteps
        );
    }

    let config = ModelConfig {
        dim: args.dim,
        heads: args.heads,
        blocks: args.blocks,
        max_timesteps: args.max_timesteps,
        dropout: args.dropout,
    };
    let mut model = Model::new(config.clone(), args.seed);
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        minibatch: args.minibatch,
        seed: args.seed,
    };
    let stats = train(&mut model, &data, &cfg);
    check_finite(&stats)?;
    println!(
        "trained {} epochs on {} trajectories: loss {:.6} -> {:.6}",
        args.epochs,
        data.len(),
        stats.first_loss(),
        stats.final_loss(),
    );

    let norm = NormConstants::default();
    let meta = CheckpointMeta {
        config: config.clone(),
        norm: norm.clone(),
        training: TrainingMeta {
            epochs: args.epochs,
            first_loss: stats.first_loss(),
            loss_tail: loss_tail(&stats),
            budgets_seen: summary.budgets,
            workloads: summary.workloads,
            batch: summary.batch,
        },
        lineage: None,
    };

    let mut manifest = RunManifest::new(serde_json::json!({
        "model": config,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "minibatch": args.minibatch,
        "normalization": norm,
        "trajectories": data.len(),
    }));
    manifest.seed("train", args.seed);
    manifest.input(&args.data)?;
    write_artifacts(&args.out_dir, &mut model, &meta, &stats, manifest, start)?;
    Ok(ExitCode::SUCCESS)
}

pub fn run_finetune(args: &FinetuneArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let (mut model, parent) = fusemap_core::seqmodel::load_checkpoint(&args.parent)
        .with_context(|| format!("loading parent checkpoint '{}'", args.parent.display()))?;
    let data = read_dataset(&args.data)
        .with_context(|| format!("loading dataset '{}'", args.data.display()))?;
    let summary = summarize(&data)?;
    if summary.longest > parent.config.max_timesteps {
        bail!(
            "trajectory needs {} timesteps but the parent model window is {}",
            summary.longest,
            parent.config.max_timesteps
        );
    }

    let epochs = ((parent.training.epochs as f64 * args.epoch_fraction).round() as usize).max(1);
    let cfg = TrainConfig {
        epochs,
        learning_rate: args.lr,
        minibatch: args.minibatch,
        seed: args.seed,
    };
    let stats = train(&mut model, &data, &cfg);
    check_finite(&stats)?;
    println!(
        "fine-tuned {} epochs ({}x of parent's {}) on {} trajectories: loss {:.6} -> {:.6}",
        epochs,
        args.epoch_fraction,
        parent.training.epochs,
        data.len(),
        stats.first_loss(),
        stats.final_loss(),
    );

    let union = |a: &[u64], b: &[u64]| -> Vec<u64> {
        a.iter().chain(b).copied().collect::<BTreeSet<_>>().into_iter().collect()
    };
    let meta = CheckpointMeta {
        config: parent.config.clone(),
        norm: parent.norm.clone(),
        training: TrainingMeta {
            epochs,
            first_loss: stats.first_loss(),
            loss_tail: loss_tail(&stats),
            budgets_seen: union(&parent.training.budgets_seen, &summary.budgets),
            workloads: {
                let mut all: BTreeSet<String> =
                    parent.training.workloads.iter().cloned().collect();
                all.extend(summary.workloads);
                all.into_iter().collect()
            },
            batch: summary.batch,
        },
        lineage: Some(Lineage {
            parent_sha256: sha256_file(&args.parent)?,
            epoch_fraction: args.epoch_fraction,
        }),
    };

    let mut manifest = RunManifest::new(serde_json::json!({
        "model": parent.config,
        "epochs": epochs,
        "epoch_fraction": args.epoch_fraction,
        "learning_rate": args.lr,
        "minibatch": args.minibatch,
        "trajectories": data.len(),
    }));
    manifest.seed("finetune", args.seed);
    manifest.input(&args.parent)?;
    manifest.input(&args.data)?;
    write_artifacts(&args.out_dir, &mut model, &meta, &stats, manifest, start)?;
    Ok(ExitCode::SUCCESS)
}

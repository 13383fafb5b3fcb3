//! Trajectory datasets: JSONL persistence and teacher-driven generation.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::costmodel::{AcceleratorConfig, CostError};
use crate::parallel::Executor;
use crate::search::{ga_search_in, GaConfig, SearchError};
use crate::seqmodel::state::{build_trajectory, NormConstants, Trajectory};
use crate::workload::Workload;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("dataset is empty")]
    Empty,
}

/// One trajectory per line.
pub fn write_dataset(path: &Path, trajectories: &[Trajectory]) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut out, t).map_err(|source| DatasetError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Trajectory>, DatasetError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory =
            serde_json::from_str(&line).map_err(|source| DatasetError::Json { line: idx + 1, source })?;
        out.push(t);
    }
    if out.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct DatasetBuild {
    pub trajectories: Vec<Trajectory>,
    /// (workload, budget) pairs where the teacher found no valid strategy.
    pub skipped: Vec<(String, u64)>,
    /// Total cost-model evaluations spent by the teacher.
    pub samples_used: u64,
}

/// Runs the genetic teacher once per (workload, budget) cell and keeps the
/// distinct valid strategies from each final population, best first. Seeds
/// derive from `base_seed` plus the cell index, so the build is reproducible
/// and cells are independent.
pub fn gen_dataset(
    executor: &Executor,
    workloads: &[Workload],
    batch: u64,
    budgets: &[u64],
    accel: &AcceleratorConfig,
    ga: &GaConfig,
    top_k: usize,
    base_seed: u64,
    norm: &NormConstants,
) -> Result<DatasetBuild, DatasetError> {
    let mut trajectories = Vec::new();
    let mut skipped = Vec::new();
    let mut samples_used = 0u64;
    for (wi, workload) in workloads.iter().enumerate() {
        for (bi, &budget) in budgets.iter().enumerate() {
            let cell = AcceleratorConfig { onchip_buffer: budget, ..accel.clone() };
            let cfg = GaConfig {
                seed: base_seed.wrapping_add((wi * budgets.len() + bi) as u64),
                ..ga.clone()
            };
            let result = ga_search_in(executor, workload, batch, &cell, &cfg)?;
            samples_used += result.samples_used;
            let mut seen = std::collections::HashSet::new();
            let mut kept = 0usize;
            for (strategy, report) in &result.final_population {
                if !report.valid || !seen.insert(strategy.actions.clone()) {
                    continue;
                }
                trajectories.push(build_trajectory(workload, strategy, batch, budget, accel, norm)?);
                kept += 1;
                if kept == top_k {
                    break;
                }
            }
            if kept == 0 {
                skipped.push((workload.name.clone(), budget));
            }
        }
    }
    Ok(DatasetBuild { trajectories, skipped, samples_used })
}

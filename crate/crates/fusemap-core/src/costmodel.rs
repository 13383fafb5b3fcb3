//! Analytical roofline cost model for fused-layer execution.
//!
//! Each fused group is costed three ways and takes the slowest:
//!
//! * compute time: total MACs over the full batch at peak PE throughput;
//! * off-chip time: bytes crossing the DRAM boundary (group input, group
//!   output, all weights, plus re-reads of skip tensors produced outside the
//!   group) at off-chip bandwidth;
//! * on-chip time: every input, output and weight byte each layer touches in
//!   the shared buffer, at on-chip bandwidth.
//!
//! Workload latency is the sum over groups, so it depends only on where the
//! group boundaries fall. Micro-batch staging determines the peak buffer
//! footprint instead: the group's input tensor, every layer output, and any
//! skip tensor carried across a group boundary are resident at their staging
//! granularity. Weights stream through reserved space that is not part of
//! the staging budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::Executor;
use crate::strategy::{FusedGroup, Strategy, StrategyError};
use crate::workload::Workload;

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("batch must be positive")]
    ZeroBatch,
}

/// Hardware description. Defaults model an edge-class device: 1024 MACs per
/// cycle at 1 GHz, 2 GB/s DRAM, 20 GB/s on-chip fabric, 64 MiB buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceleratorConfig {
    /// Multiply-accumulate units usable per cycle.
    pub pes: u64,
    pub frequency_hz: f64,
    /// Off-chip (DRAM) bandwidth, bytes per second.
    pub bw_offchip: f64,
    /// On-chip buffer bandwidth, bytes per second.
    pub bw_onchip: f64,
    /// On-chip buffer capacity in bytes; the validity budget.
    pub onchip_buffer: u64,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        AcceleratorConfig {
            pes: 1024,
            frequency_hz: 1e9,
            bw_offchip: 2e9,
            bw_onchip: 20e9,
            onchip_buffer: 64 << 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupCost {
    pub first_layer: usize,
    pub last_layer: usize,
    pub compute_seconds: f64,
    pub offchip_seconds: f64,
    pub onchip_seconds: f64,
    /// max of the three roofline terms
    pub latency_seconds: f64,
    pub offchip_bytes: u64,
    pub onchip_bytes: u64,
    pub peak_buffer_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub latency_seconds: f64,
    pub offchip_bytes: u64,
    pub peak_buffer_bytes: u64,
    /// Peak fits the on-chip buffer.
    pub valid: bool,
    pub groups: Vec<GroupCost>,
}

impl CostReport {
    pub fn speedup_over(&self, baseline: &CostReport) -> f64 {
        baseline.latency_seconds / self.latency_seconds
    }
}

fn group_cost(workload: &Workload, batch: u64, accel: &AcceleratorConfig, group: &FusedGroup) -> GroupCost {
    let bytes = workload.bytes_per_element;
    let layers = &workload.layers[group.first_layer..=group.last_layer];

    let mut macs: u64 = 0;
    let mut offchip: u64 = 0;
    let mut onchip: u64 = 0;
    let mut peak: u64 = 0;

    offchip += layers[0].in_activation_bytes(batch, bytes);
    offchip += layers[layers.len() - 1].out_activation_bytes(batch, bytes);
    peak += layers[0].in_activation_bytes(group.input_staging, bytes);

    for (offset, layer) in layers.iter().enumerate() {
        macs += layer.macs(batch);
        offchip += layer.weight_bytes(bytes);
        onchip += layer.in_activation_bytes(batch, bytes)
            + layer.out_activation_bytes(batch, bytes)
            + layer.weight_bytes(bytes);
        peak += layer.out_activation_bytes(group.staging[offset], bytes);
        if let Some(src) = layer.skip_from {
            if src < group.first_layer {
                // The skip tensor lives off-chip; re-read it and stage it at
                // the consumer's granularity.
                offchip += workload.layers[src].out_activation_bytes(batch, bytes);
                peak += workload.layers[src].out_activation_bytes(group.staging[offset], bytes);
            }
        }
    }

    let compute_seconds = macs as f64 / (accel.pes as f64 * accel.frequency_hz);
    let offchip_seconds = offchip as f64 / accel.bw_offchip;
    let onchip_seconds = onchip as f64 / accel.bw_onchip;
    GroupCost {
        first_layer: group.first_layer,
        last_layer: group.last_layer,
        compute_seconds,
        offchip_seconds,
        onchip_seconds,
        latency_seconds: compute_seconds.max(offchip_seconds).max(onchip_seconds),
        offchip_bytes: offchip,
        onchip_bytes: onchip,
        peak_buffer_bytes: peak,
    }
}

fn report_for_groups(
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
    groups: &[FusedGroup],
) -> CostReport {
    let groups: Vec<GroupCost> = groups.iter().map(|g| group_cost(workload, batch, accel, g)).collect();
    let latency_seconds = groups.iter().map(|g| g.latency_seconds).sum();
    let offchip_bytes = groups.iter().map(|g| g.offchip_bytes).sum();
    let peak_buffer_bytes = groups.iter().map(|g| g.peak_buffer_bytes).max().unwrap_or(0);
    CostReport {
        latency_seconds,
        offchip_bytes,
        peak_buffer_bytes,
        valid: peak_buffer_bytes <= accel.onchip_buffer,
        groups,
    }
}

pub fn evaluate(
    workload: &Workload,
    strategy: &Strategy,
    batch: u64,
    accel: &AcceleratorConfig,
) -> Result<CostReport, CostError> {
    if batch == 0 {
        return Err(CostError::ZeroBatch);
    }
    strategy.validate(workload.num_layers(), batch)?;
    let groups = strategy.groups(workload.num_layers())?;
    Ok(report_for_groups(workload, batch, accel, &groups))
}

/// Costs many strategies at once on the given executor. Results keep the
/// input order and are identical across thread counts.
pub fn evaluate_many_in(
    executor: &Executor,
    workload: &Workload,
    strategies: &[Strategy],
    batch: u64,
    accel: &AcceleratorConfig,
) -> Result<Vec<CostReport>, CostError> {
    if batch == 0 {
        return Err(CostError::ZeroBatch);
    }
    for s in strategies {
        s.validate(workload.num_layers(), batch)?;
    }
    Ok(executor.map_slice(strategies, |s| {
        let groups = s.groups(workload.num_layers()).expect("validated above");
        report_for_groups(workload, batch, accel, &groups)
    }))
}

pub fn evaluate_many(
    workload: &Workload,
    strategies: &[Strategy],
    batch: u64,
    accel: &AcceleratorConfig,
) -> Result<Vec<CostReport>, CostError> {
    evaluate_many_in(&Executor::auto(), workload, strategies, batch, accel)
}

/// Latency of the first `actions.len() - 1` layers, with the last of them
/// unconditionally closing its group, as if the prefix were a complete
/// workload. An empty prefix (one action, zero layers) costs nothing.
pub fn partial_latency(
    workload: &Workload,
    actions: &[crate::strategy::Action],
    batch: u64,
    accel: &AcceleratorConfig,
) -> Result<f64, CostError> {
    if batch == 0 {
        return Err(CostError::ZeroBatch);
    }
    assert!(!actions.is_empty(), "a prefix always includes the input tensor's action");
    let covered = actions.len() - 1;
    assert!(covered <= workload.num_layers(), "prefix longer than the workload");
    if covered == 0 {
        return Ok(0.0);
    }
    let prefix = Strategy::new(actions.to_vec());
    prefix.validate(covered, batch)?;
    let groups = prefix.groups(covered)?;
    Ok(groups.iter().map(|g| group_cost(workload, batch, accel, g).latency_seconds).sum())
}

/// Cost of running every layer in its own group: the speedup baseline.
pub fn no_fusion_report(workload: &Workload, batch: u64, accel: &AcceleratorConfig) -> Result<CostReport, CostError> {
    evaluate(workload, &Strategy::no_fusion(workload.num_layers(), batch), batch, accel)
}

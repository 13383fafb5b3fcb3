//! Trajectory encoding: how a (workload, strategy, budget) triple becomes a
//! token sequence the model can learn from.

use serde::{Deserialize, Serialize};

use crate::costmodel::{evaluate, partial_latency, AcceleratorConfig, CostError};
use crate::strategy::{Action, Strategy};
use crate::workload::Workload;

pub const STATE_DIM: usize = 8;

/// Normalization constants baked into a trained model's checkpoint so that
/// inference reproduces the training-time encoding exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConstants {
    /// Divisor for log2-scaled shape features.
    pub log2_scale: f64,
    /// Per-sample buffer headroom is expressed in MiB and divided by this.
    pub per_sample_scale: f64,
    /// Divisor for the conditioning scalar, in bytes.
    pub budget_scale: f64,
}

impl Default for NormConstants {
    fn default() -> Self {
        NormConstants {
            log2_scale: 16.0,
            per_sample_scale: 64.0,
            budget_scale: (64u64 << 20) as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryStep {
    /// Conditioning scalar: buffer budget over [`NormConstants::budget_scale`].
    pub r: f64,
    pub s: [f64; STATE_DIM],
    /// Continuous action encoding; see [`Action::encode`].
    pub a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    pub workload: String,
    pub batch: u64,
    pub budget_bytes: u64,
    pub latency_seconds: f64,
    pub peak_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn timesteps(&self) -> usize {
        self.steps.len()
    }
}

fn log2_scaled(v: u64, norm: &NormConstants) -> f64 {
    (v as f64).log2() / norm.log2_scale
}

/// State vector for the decision at timestep `t`, where `prev_actions` holds
/// the `t` actions already taken. Six log-scaled shape features of the layer
/// whose output tensor is being placed (timestep 0 places the network input
/// and uses a pseudo-layer shaped like it), the clamped per-sample buffer
/// headroom, and the normalized latency of the prefix relative to running it
/// unfused.
pub fn state_features(
    workload: &Workload,
    prev_actions: &[Action],
    batch: u64,
    budget_bytes: u64,
    accel: &AcceleratorConfig,
    norm: &NormConstants,
) -> Result<[f64; STATE_DIM], CostError> {
    let t = prev_actions.len();
    assert!(t <= workload.num_layers(), "timestep beyond the final tensor");
    let (k, c, y, x, r, s) = if t == 0 {
        let i = &workload.input;
        (i.c, i.c, i.y, i.x, 1, 1)
    } else {
        let l = &workload.layers[t - 1];
        (l.k, l.c, l.y, l.x, l.r, l.s)
    };

    let per_sample_mib = budget_bytes as f64 / batch as f64 / (1u64 << 20) as f64;
    let headroom = (per_sample_mib / norm.per_sample_scale).clamp(0.0, 2.0);

    let p_norm = if t <= 1 {
        1.0
    } else {
        let chosen = partial_latency(workload, prev_actions, batch, accel)?;
        let mut unfused = vec![Action::Sync; t];
        unfused[0] = Action::MicroBatch(batch);
        let baseline = partial_latency(workload, &unfused, batch, accel)?;
        chosen / baseline
    };

    Ok([
        log2_scaled(k, norm),
        log2_scaled(c, norm),
        log2_scaled(y, norm),
        log2_scaled(x, norm),
        log2_scaled(r, norm),
        log2_scaled(s, norm),
        headroom,
        p_norm,
    ])
}

/// Encodes a complete strategy as a training trajectory under the given
/// budget. The conditioning scalar is constant across timesteps.
pub fn build_trajectory(
    workload: &Workload,
    strategy: &Strategy,
    batch: u64,
    budget_bytes: u64,
    accel: &AcceleratorConfig,
    norm: &NormConstants,
) -> Result<Trajectory, CostError> {
    let scoring = AcceleratorConfig { onchip_buffer: budget_bytes, ..accel.clone() };
    let report = evaluate(workload, strategy, batch, &scoring)?;
    let r = budget_bytes as f64 / norm.budget_scale;
    let steps = (0..strategy.len())
        .map(|t| {
            let s = state_features(workload, &strategy.actions[..t], batch, budget_bytes, accel, norm)?;
            Ok(TrajectoryStep { r, s, a: strategy.actions[t].encode(batch) })
        })
        .collect::<Result<Vec<_>, CostError>>()?;
    Ok(Trajectory {
        meta: TrajectoryMeta {
            workload: workload.name.clone(),
            batch,
            budget_bytes,
            latency_seconds: report.latency_seconds,
            peak_bytes: report.peak_buffer_bytes,
        },
        steps,
    })
}

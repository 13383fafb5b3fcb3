//! Fusion strategies.
//!
//! A strategy assigns one action to every tensor in a workload's linear
//! chain: index 0 is the network input, index `i + 1` is the output of layer
//! `i`. The action is either `Sync`, meaning the tensor is written back
//! off-chip and the fused group ends at its producer, or `MicroBatch(m)`,
//! meaning the tensor stays on-chip staged in micro-batches of `m` samples
//! and its producer and consumer are fused. The network input can never be
//! `Sync` (it always arrives from off-chip and is staged at some granularity)
//! and the last layer always terminates its group no matter what action its
//! output tensor carries.
//!
//! Grouping alone determines which tensors move off-chip; micro-batch sizes
//! only change how much buffer space the staged tensors occupy.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("strategy has {got} actions but the workload needs {expected} (layers + 1)")]
    LengthMismatch { expected: usize, got: usize },
    #[error("the network input tensor (action 0) cannot be sync")]
    SyncAtInput,
    #[error("action {index}: micro-batch {micro_batch} does not divide batch {batch}")]
    BadMicroBatch { index: usize, micro_batch: u64, batch: u64 },
}

/// Staging decision for one tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// Write the tensor off-chip; the fused group ends at its producer.
    Sync,
    /// Keep the tensor on-chip, staged `m` samples at a time.
    MicroBatch(u64),
}

impl Action {
    pub fn as_i64(self) -> i64 {
        match self {
            Action::Sync => -1,
            Action::MicroBatch(m) => m as i64,
        }
    }

    pub fn from_i64(v: i64) -> Option<Action> {
        match v {
            -1 => Some(Action::Sync),
            m if m > 0 => Some(Action::MicroBatch(m as u64)),
            _ => None,
        }
    }

    /// Micro-batch granularity at which the tensor occupies buffer space.
    /// A synced tensor streams through at single-sample granularity.
    pub fn staging(self) -> u64 {
        match self {
            Action::Sync => 1,
            Action::MicroBatch(m) => m,
        }
    }

    /// Continuous embedding used by the sequence model: sync sits at -1,
    /// micro-batches at their fraction of the full batch.
    pub fn encode(self, batch: u64) -> f64 {
        match self {
            Action::Sync => -1.0,
            Action::MicroBatch(m) => m as f64 / batch as f64,
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_i64(self.as_i64())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(deserializer)?;
        Action::from_i64(v)
            .ok_or_else(|| D::Error::custom(format!("action must be -1 (sync) or a positive micro-batch, got {v}")))
    }
}

/// One action per tensor; see the module docs for the indexing convention.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Strategy {
    pub actions: Vec<Action>,
}

/// A maximal run of fused layers, with the staging granularity of its input
/// tensor and of every layer output inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedGroup {
    pub first_layer: usize,
    /// Inclusive.
    pub last_layer: usize,
    /// Staging micro-batch of the tensor feeding the group.
    pub input_staging: u64,
    /// Staging micro-batch of each layer output, `first_layer..=last_layer`.
    pub staging: Vec<u64>,
}

impl Strategy {
    pub fn new(actions: Vec<Action>) -> Strategy {
        Strategy { actions }
    }

    /// Every layer in its own group, the whole batch staged at once.
    pub fn no_fusion(num_layers: usize, batch: u64) -> Strategy {
        let mut actions = vec![Action::Sync; num_layers + 1];
        actions[0] = Action::MicroBatch(batch);
        Strategy { actions }
    }

    /// Every tensor kept on-chip at the same granularity.
    pub fn uniform(num_layers: usize, micro_batch: u64) -> Strategy {
        Strategy { actions: vec![Action::MicroBatch(micro_batch); num_layers + 1] }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self, num_layers: usize, batch: u64) -> Result<(), StrategyError> {
        if self.actions.len() != num_layers + 1 {
            return Err(StrategyError::LengthMismatch { expected: num_layers + 1, got: self.actions.len() });
        }
        if self.actions[0] == Action::Sync {
            return Err(StrategyError::SyncAtInput);
        }
        for (index, action) in self.actions.iter().enumerate() {
            if let Action::MicroBatch(m) = *action {
                if m == 0 || m > batch || batch % m != 0 {
                    return Err(StrategyError::BadMicroBatch { index, micro_batch: m, batch });
                }
            }
        }
        Ok(())
    }

    /// Splits the layer chain into fused groups. A group ends where its last
    /// layer's output tensor is synced, and unconditionally at the last layer.
    pub fn groups(&self, num_layers: usize) -> Result<Vec<FusedGroup>, StrategyError> {
        if self.actions.len() != num_layers + 1 {
            return Err(StrategyError::LengthMismatch { expected: num_layers + 1, got: self.actions.len() });
        }
        let mut out = Vec::new();
        let mut first = 0usize;
        for i in 0..num_layers {
            if self.actions[i + 1] == Action::Sync || i == num_layers - 1 {
                out.push(FusedGroup {
                    first_layer: first,
                    last_layer: i,
                    input_staging: self.actions[first].staging(),
                    staging: (first..=i).map(|j| self.actions[j + 1].staging()).collect(),
                });
                first = i + 1;
            }
        }
        Ok(out)
    }

    /// Continuous embedding of every action; inverse of [`legalize`].
    pub fn to_raw(&self, batch: u64) -> Vec<f64> {
        self.actions.iter().map(|a| a.encode(batch)).collect()
    }
}

/// All actions available for a given batch size: sync plus the divisors of
/// the batch in ascending order. Oversized divisor sets keep the 63 largest
/// so the space stays bounded for search.
pub fn action_space(batch: u64) -> Vec<Action> {
    let mut divisors = divisors_of(batch);
    if divisors.len() > 63 {
        let cut = divisors.len() - 63;
        divisors.drain(..cut);
    }
    let mut out = Vec::with_capacity(divisors.len() + 1);
    out.push(Action::Sync);
    out.extend(divisors.into_iter().map(Action::MicroBatch));
    out
}

fn divisors_of(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

/// Snaps one continuous value onto the action set. Values at or below -0.5
/// read as sync; anything else is scaled by the batch and matched to the
/// nearest available micro-batch, ties resolving downward. With `allow_sync`
/// false (the input tensor) the sync region collapses onto the smallest
/// micro-batch.
pub fn legalize_value(value: f64, batch: u64, allow_sync: bool) -> Action {
    let space = action_space(batch);
    let micro_batches: Vec<u64> = space
        .iter()
        .filter_map(|a| match a {
            Action::MicroBatch(m) => Some(*m),
            Action::Sync => None,
        })
        .collect();
    if value <= -0.5 {
        if allow_sync {
            return Action::Sync;
        }
        return Action::MicroBatch(micro_batches[0]);
    }
    let target = (value * batch as f64).clamp(1.0, batch as f64);
    let mut best = micro_batches[0];
    let mut best_dist = f64::INFINITY;
    for &m in &micro_batches {
        let dist = (m as f64 - target).abs();
        if dist < best_dist {
            best = m;
            best_dist = dist;
        }
    }
    Action::MicroBatch(best)
}

/// Snaps a whole continuous action vector onto a legal strategy.
pub fn legalize(raw: &[f64], batch: u64) -> Strategy {
    let actions = raw
        .iter()
        .enumerate()
        .map(|(i, &v)| legalize_value(v, batch, i != 0))
        .collect();
    Strategy { actions }
}

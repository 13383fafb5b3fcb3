//! Workload descriptions: per-layer loop-nest shapes plus a built-in model zoo.
//!
//! A layer is a six-loop convolution shape `(k, c, y, x, r, s)`. `y` and `x`
//! are the layer's *own output* activation dimensions; stride and pooling are
//! folded into the recorded dimensions when a network is transcribed, so the
//! cost model never sees them explicitly. Fully connected layers are written
//! in the same notation with `y = x = 1`.

mod zoo;

pub use zoo::{builtin, builtin_names};

use serde::{Deserialize, Serialize};
use std::path::Path;

/// Upper bound on `k*c*y*x*r*s` per layer. Keeps every byte and MAC count
/// representable in `u64` with room for batch and element-width factors.
const DIM_PRODUCT_LIMIT: u128 = 1 << 50;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("failed to read workload file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse workload JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("layer {layer}: {reason}")]
    Validation { layer: usize, reason: String },
    #[error("workload has no layers")]
    Empty,
    #[error("network input dimensions must be positive")]
    BadInput,
    #[error("bytes_per_element must be positive")]
    BadElementWidth,
    #[error("unknown built-in workload {0:?}")]
    UnknownBuiltin(String),
}

/// One six-loop layer shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerShape {
    pub name: String,
    /// Output channels.
    pub k: u64,
    /// Input channels.
    pub c: u64,
    /// Output rows.
    pub y: u64,
    /// Output columns.
    pub x: u64,
    /// Kernel rows.
    pub r: u64,
    /// Kernel columns.
    pub s: u64,
    /// Index of an earlier layer whose output is added elementwise to this
    /// layer's input (residual connection).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_from: Option<usize>,
}

impl LayerShape {
    /// Multiply-accumulate count for `batch` samples.
    pub fn macs(&self, batch: u64) -> u64 {
        let p = batch as u128
            * self.k as u128
            * self.c as u128
            * self.y as u128
            * self.x as u128
            * self.r as u128
            * self.s as u128;
        u64::try_from(p).expect("MAC count exceeds u64 (validate() bounds the layer product)")
    }

    /// Bytes of this layer's output activation for `micro_batch` samples.
    pub fn out_activation_bytes(&self, micro_batch: u64, bytes_per_element: u64) -> u64 {
        let p = micro_batch as u128
            * self.k as u128
            * self.y as u128
            * self.x as u128
            * bytes_per_element as u128;
        u64::try_from(p).expect("activation bytes exceed u64")
    }

    /// Bytes of this layer's input activation for `micro_batch` samples. The
    /// input spatial extent is approximated by the layer's own `y`/`x`.
    pub fn in_activation_bytes(&self, micro_batch: u64, bytes_per_element: u64) -> u64 {
        let p = micro_batch as u128
            * self.c as u128
            * self.y as u128
            * self.x as u128
            * bytes_per_element as u128;
        u64::try_from(p).expect("activation bytes exceed u64")
    }

    /// Bytes of this layer's weight tensor.
    pub fn weight_bytes(&self, bytes_per_element: u64) -> u64 {
        let p = self.k as u128
            * self.c as u128
            * self.r as u128
            * self.s as u128
            * bytes_per_element as u128;
        u64::try_from(p).expect("weight bytes exceed u64")
    }
}

/// Shape of the tensor fed to the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDims {
    pub c: u64,
    pub y: u64,
    pub x: u64,
}

fn default_bytes_per_element() -> u64 {
    2
}

/// A network: an input descriptor and an ordered chain of layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub name: String,
    pub input: InputDims,
    #[serde(default = "default_bytes_per_element")]
    pub bytes_per_element: u64,
    pub layers: Vec<LayerShape>,
}

impl Workload {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Checks the structural invariants:
    /// all dimensions positive, channel chaining (`layers[i].c == layers[i-1].k`,
    /// `layers[0].c == input.c`), residual edges strictly backward with the
    /// producer's output shape matching the consumer's input shape, and the
    /// per-layer dimension product inside the overflow-safe range.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.layers.is_empty() {
            return Err(WorkloadError::Empty);
        }
        if self.input.c == 0 || self.input.y == 0 || self.input.x == 0 {
            return Err(WorkloadError::BadInput);
        }
        if self.bytes_per_element == 0 {
            return Err(WorkloadError::BadElementWidth);
        }
        for (i, l) in self.layers.iter().enumerate() {
            let err = |reason: String| WorkloadError::Validation { layer: i, reason };
            if l.k == 0 || l.c == 0 || l.y == 0 || l.x == 0 || l.r == 0 || l.s == 0 {
                return Err(err("all of k, c, y, x, r, s must be positive".into()));
            }
            let product = l.k as u128 * l.c as u128 * l.y as u128 * l.x as u128 * l.r as u128 * l.s as u128;
            if product > DIM_PRODUCT_LIMIT {
                return Err(err(format!(
                    "dimension product {product} exceeds supported limit {DIM_PRODUCT_LIMIT}"
                )));
            }
            let expected_c = if i == 0 { self.input.c } else { self.layers[i - 1].k };
            if l.c != expected_c {
                return Err(err(format!(
                    "input channels {} do not chain from previous output channels {}",
                    l.c, expected_c
                )));
            }
            if let Some(p) = l.skip_from {
                if p >= i {
                    return Err(err(format!("skip_from {p} is not strictly backward")));
                }
                let src = &self.layers[p];
                if src.k != l.c || src.y != l.y || src.x != l.x {
                    return Err(err(format!(
                        "skip_from {p} output shape ({}, {}, {}) does not match input shape ({}, {}, {})",
                        src.k, src.y, src.x, l.c, l.y, l.x
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates a workload from a JSON string. Unknown fields are
    /// rejected so schema typos fail loudly.
    pub fn from_json(json: &str) -> Result<Self, WorkloadError> {
        let w: Workload = serde_json::from_str(json)?;
        w.validate()?;
        Ok(w)
    }

    /// Loads and validates a workload file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serialization cannot fail")
    }
}

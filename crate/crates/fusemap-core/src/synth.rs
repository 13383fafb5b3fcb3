//! Random workload and strategy generators for property tests and synthetic
//! benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::strategy::{action_space, Action, Strategy};
use crate::workload::{InputDims, LayerShape, Workload};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_layers: usize,
    /// Keep one spatial extent across all layers, so every tensor that an
    /// adjacent pair shares has identical byte size on both sides.
    pub uniform_spatial: bool,
    /// Occasionally add a backward skip edge where shapes permit.
    pub allow_skips: bool,
    pub bytes_per_element: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { num_layers: 8, uniform_spatial: true, allow_skips: false, bytes_per_element: 2 }
    }
}

const CHANNELS: [u64; 6] = [4, 8, 16, 32, 64, 128];
const SPATIAL: [u64; 5] = [4, 8, 16, 32, 64];
const KERNEL: [u64; 2] = [1, 3];

pub fn random_workload(cfg: &SynthConfig, rng: &mut impl Rng) -> Workload {
    assert!(cfg.num_layers > 0, "a workload needs at least one layer");
    let shared_spatial = *SPATIAL.choose(rng).unwrap();
    let mut in_ch = *CHANNELS.choose(rng).unwrap();
    let input = InputDims {
        c: in_ch,
        y: if cfg.uniform_spatial { shared_spatial } else { *SPATIAL.choose(rng).unwrap() },
        x: if cfg.uniform_spatial { shared_spatial } else { *SPATIAL.choose(rng).unwrap() },
    };
    let mut layers: Vec<LayerShape> = Vec::with_capacity(cfg.num_layers);
    for i in 0..cfg.num_layers {
        let k = *CHANNELS.choose(rng).unwrap();
        let (y, x) = if cfg.uniform_spatial {
            (shared_spatial, shared_spatial)
        } else {
            (*SPATIAL.choose(rng).unwrap(), *SPATIAL.choose(rng).unwrap())
        };
        let mut layer = LayerShape {
            name: format!("synth{i}"),
            k,
            c: in_ch,
            y,
            x,
            r: *KERNEL.choose(rng).unwrap(),
            s: *KERNEL.choose(rng).unwrap(),
            skip_from: None,
        };
        if cfg.allow_skips && rng.gen_bool(0.3) {
            let candidates: Vec<usize> = layers
                .iter()
                .enumerate()
                .filter(|(_, p)| p.k == layer.c && p.y == layer.y && p.x == layer.x)
                .map(|(idx, _)| idx)
                .collect();
            layer.skip_from = candidates.choose(rng).copied();
        }
        layers.push(layer);
        in_ch = k;
    }
    Workload {
        name: "synthetic".into(),
        input,
        bytes_per_element: cfg.bytes_per_element,
        layers,
    }
}

/// Uniform draw from the action space for every tensor, resampling the input
/// tensor's action from the micro-batch subset.
pub fn random_strategy(num_layers: usize, batch: u64, rng: &mut impl Rng) -> Strategy {
    let space = action_space(batch);
    let micro_batches: Vec<Action> =
        space.iter().copied().filter(|a| *a != Action::Sync).collect();
    let mut actions = Vec::with_capacity(num_layers + 1);
    actions.push(*micro_batches.choose(rng).unwrap());
    for _ in 0..num_layers {
        actions.push(*space.choose(rng).unwrap());
    }
    Strategy::new(actions)
}

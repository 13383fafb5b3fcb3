//! Numerical verification of the hand-written backward pass.
//!
//! Runs a tiny model on a fixed synthetic batch, accumulates analytic
//! gradients, then compares a spread of coordinates per parameter against
//! central finite differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::seqmodel::model::{Model, ModelConfig};
use crate::seqmodel::state::STATE_DIM;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative disagreement with a floor that keeps near-zero gradients from
/// amplifying rounding noise.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

type Sequence = (Vec<f64>, Vec<[f64; STATE_DIM]>, Vec<f64>);

fn synthetic_batch(seed: u64, sequences: usize, timesteps: usize) -> Vec<Sequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sequences)
        .map(|_| {
            let r = vec![rng.gen_range(0.0..1.0); timesteps];
            let s = (0..timesteps)
                .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.5)))
                .collect();
            let a = (0..timesteps).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (r, s, a)
        })
        .collect()
}

fn batch_loss(model: &Model, batch: &[Sequence]) -> f64 {
    let count: usize = batch.iter().map(|(r, _, _)| r.len()).sum();
    let mut total = 0.0;
    for (r, s, a) in batch {
        let preds = model.forward(r, s, a);
        total += preds.iter().zip(a).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
    }
    total / count as f64
}

fn accumulate_grads(model: &mut Model, batch: &[Sequence]) {
    let count: usize = batch.iter().map(|(r, _, _)| r.len()).sum();
    model.zero_grads();
    for (r, s, a) in batch {
        let tape = model.forward_tape(r, s, a, None);
        let dpred: Vec<f64> = tape
            .predictions()
            .iter()
            .zip(a)
            .map(|(p, t)| 2.0 * (p - t) / count as f64)
            .collect();
        model.backward(&tape, &dpred);
    }
}

fn perturb(model: &mut Model, param_index: usize, coord: usize, delta: f64) {
    let mut seen = 0;
    model.visit_params(|_, value, _, _| {
        if seen == param_index {
            value[coord] += delta;
        }
        seen += 1;
    });
}

/// (parameter coordinate label, analytic, numeric) for a spread of
/// coordinates in every parameter tensor.
fn gradient_pairs(model: &mut Model, batch: &[Sequence]) -> Vec<(String, f64, f64)> {
    accumulate_grads(model, batch);
    let mut analytic: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    model.visit_params(|name, _, grad, _| {
        let len = grad.len();
        let mut coords = vec![0, len / 3, len / 2, len - 1];
        coords.sort_unstable();
        coords.dedup();
        let grads = coords.iter().map(|&c| grad[c]).collect();
        analytic.push((name.to_string(), coords, grads));
    });

    let h = 1e-5;
    let mut pairs = Vec::new();
    for (pi, (name, coords, grads)) in analytic.iter().enumerate() {
        for (&coord, &ga) in coords.iter().zip(grads) {
            perturb(model, pi, coord, h);
            let up = batch_loss(model, batch);
            perturb(model, pi, coord, -2.0 * h);
            let down = batch_loss(model, batch);
            perturb(model, pi, coord, h);
            let gn = (up - down) / (2.0 * h);
            pairs.push((format!("{name}[{coord}]"), ga, gn));
        }
    }
    pairs
}

fn summarize(pairs: &[(String, f64, f64)], tolerance: f64) -> GradCheckReport {
    let mut max_rel_error = 0.0;
    let mut worst_param = String::new();
    for (label, ga, gn) in pairs {
        let rel = rel_error(*ga, *gn);
        if rel >= max_rel_error {
            max_rel_error = rel;
            worst_param = label.clone();
        }
    }
    GradCheckReport {
        checked: pairs.len(),
        max_rel_error,
        worst_param,
        tolerance,
        passed: max_rel_error <= tolerance,
    }
}

pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

/// Builds a dim-8, single-block model and checks its gradients end to end.
pub fn grad_check(seed: u64) -> GradCheckReport {
    let cfg = ModelConfig { dim: 8, heads: 2, blocks: 1, max_timesteps: 4, dropout: 0.0 };
    let mut model = Model::new(cfg, seed);
    let batch = synthetic_batch(seed ^ 0x9e3779b97f4a7c15, 2, 3);
    let pairs = gradient_pairs(&mut model, &batch);
    summarize(&pairs, GRAD_CHECK_TOLERANCE)
}

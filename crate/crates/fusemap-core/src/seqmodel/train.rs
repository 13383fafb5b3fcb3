//! Minibatch training loop. Single-threaded on purpose: gradient
//! accumulation order is fixed, so a (seed, data, config) triple always
//! produces bit-identical weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seqmodel::model::Model;
use crate::seqmodel::state::Trajectory;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 3000, learning_rate: 1e-4, minibatch: 16, seed: 1234 }
    }
}

/// Adam with bias correction; state is kept in the model's parameter visit
/// order.
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut Model) {
        if self.m.is_empty() {
            model.visit_params(|_, value, _, _| {
                self.m.push(vec![0.0; value.len()]);
                self.v.push(vec![0.0; value.len()]);
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (m, v) = (&mut self.m, &mut self.v);
        let (beta1, beta2, eps, lr) = (self.beta1, self.beta2, self.eps, self.learning_rate);
        let mut idx = 0;
        model.visit_params(|_, value, grad, _| {
            let (pm, pv) = (&mut m[idx], &mut v[idx]);
            for ((w, &g), (mi, vi)) in
                value.iter_mut().zip(grad.iter()).zip(pm.iter_mut().zip(pv.iter_mut()))
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainStats {
    /// Mean squared action error per epoch, averaged over every
    /// (trajectory, timestep) pair seen that epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainStats {
    pub fn first_loss(&self) -> f64 {
        self.epoch_losses.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Regresses each trajectory's actions from its prefix. Loss is averaged per
/// minibatch over all timesteps, so long and short trajectories weigh in by
/// their length.
pub fn train(model: &mut Model, data: &[Trajectory], cfg: &TrainConfig) -> TrainStats {
    assert!(!data.is_empty(), "training needs at least one trajectory");
    assert!(cfg.minibatch >= 1);
    let max_t = model.config().max_timesteps;
    for t in data {
        assert!(
            t.timesteps() <= max_t,
            "trajectory with {} steps exceeds the model's {max_t}-timestep window",
            t.timesteps()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    let encoded: Vec<(Vec<f64>, Vec<[f64; crate::seqmodel::state::STATE_DIM]>, Vec<f64>)> = data
        .iter()
        .map(|t| {
            let r = t.steps.iter().map(|s| s.r).collect();
            let s = t.steps.iter().map(|s| s.s).collect();
            let a = t.steps.iter().map(|s| s.a).collect();
            (r, s, a)
        })
        .collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sq_sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.minibatch) {
            let chunk_count: usize = chunk.iter().map(|&i| encoded[i].0.len()).sum();
            model.zero_grads();
            for &i in chunk {
                let (r, s, a) = &encoded[i];
                let tape = if model.config().dropout > 0.0 {
                    model.forward_tape(r, s, a, Some(&mut rng))
                } else {
                    model.forward_tape(r, s, a, None)
                };
                let dpred: Vec<f64> = tape
                    .predictions()
                    .iter()
                    .zip(a)
                    .map(|(p, t)| 2.0 * (p - t) / chunk_count as f64)
                    .collect();
                sq_sum += tape
                    .predictions()
                    .iter()
                    .zip(a)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>();
                model.backward(&tape, &dpred);
            }
            count += chunk_count;
            adam.step(model);
        }
        epoch_losses.push(sq_sum / count as f64);
    }
    TrainStats { epoch_losses }
}

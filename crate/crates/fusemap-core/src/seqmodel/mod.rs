//! Return-conditioned sequence model over fusion strategies.
//!
//! Search results become trajectories: one timestep per tensor action, each
//! carrying a conditioning scalar (the buffer budget), a state vector
//! describing the layer whose output is being placed plus rollout progress,
//! and the chosen action in its continuous encoding. A small causal
//! transformer is trained to regress the next action from everything before
//! it, and at inference decodes strategies closed-loop for budgets it may
//! never have seen.

mod checkpoint;
mod dataset;
mod gradcheck;
mod infer;
mod model;
mod state;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, Lineage, TrainingMeta};
pub use dataset::{gen_dataset, read_dataset, write_dataset, DatasetBuild};
pub use gradcheck::{grad_check, GradCheckReport};
pub use infer::{infer, InferenceResult};
pub use model::{Model, ModelConfig};
pub use state::{build_trajectory, state_features, NormConstants, Trajectory, TrajectoryMeta, TrajectoryStep, STATE_DIM};
pub use train::{train, Adam, TrainConfig, TrainStats};

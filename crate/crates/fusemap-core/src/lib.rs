//! Core library for mapping DNN inference workloads onto a fused-layer
//! accelerator: workload descriptions, fusion strategies, an analytical cost
//! model, search over the strategy space, and a sequence model that learns to
//! propose strategies.

pub mod costmodel;
pub mod parallel;
pub mod search;
pub mod seqmodel;
pub mod strategy;
pub mod synth;
pub mod workload;

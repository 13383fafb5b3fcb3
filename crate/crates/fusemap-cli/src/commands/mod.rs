pub mod compare;
pub mod dataset;
pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod search;
pub mod train;
pub mod zoo;

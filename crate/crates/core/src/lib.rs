//! Unsupervised domain adaptation for point-cloud classification:
//! self-distillation against an EMA teacher, then iterative self-training
//! with pseudo-labels refined by a graph convolutional network.

pub mod config;
pub mod dataset;
pub mod distill;
pub mod error;
pub mod graph_refine;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod pointcloud;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};

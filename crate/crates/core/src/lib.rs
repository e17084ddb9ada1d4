//! Sampling-based motion planning with a learned edge-guidance model.
//!
//! The crate builds random geometric graphs over sampled free states, plans
//! with classical baselines (PRM, Lazy PRM, RRT*, Dijkstra) and with a
//! greedy planner driven by a graph-network guidance model that orders
//! collision checks, plus the training and benchmarking machinery around
//! them.

pub mod baselines;
pub mod bench;
pub mod config;
pub mod graph;
pub mod guidance;
pub mod plan;
pub mod tensor;
pub mod train;
pub mod world;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sampling budget exceeded: {0}")]
    Sampling(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

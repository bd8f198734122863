//! Benchmark plumbing: configuration files, synthetic data, trajectory
//! files and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod generate;
pub mod trajectory;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use config::FlatConfig;
pub use trajectory::{convergence_time, load_trajectory, save_trajectory, Score};

//! Decoder-only transformer with handwritten gradients, its optimizer and
//! schedules, dataset plumbing, checkpoints, and the training loop.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod fd;
pub mod optim;
pub mod params;
pub mod real;
pub mod schedule;
pub mod trainer;
pub mod transformer;
pub mod tree;

pub use checkpoint::{load_checkpoint, load_checkpoint_f64, save_checkpoint, CheckpointMeta};
pub use config::{AttentionBiasMode, ModelConfig};
pub use params::{Layout, Tensors};
pub use real::Real;
pub use trainer::{RunManifest, SchedulerKind, StopReason, TrainConfig, TrainError, Trainer};
pub use transformer::{recency_bias_row, Batch, Model, ModelError, StepStats, IGNORE};
pub use tree::{tree_distances_from_parse, TreeDistanceMatrix, EXCLUDED};

//! Optimisation, evaluation, checkpoints and metric logs.

mod adam;
mod checkpoint;
mod config;
mod metrics;
mod trainer;

pub use adam::Adam;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_bundle, load_checkpoint, model_id, save_bundle, save_checkpoint,
    vocab_path_for, Checkpoint, CheckpointHeader, ParamEntry, MAGIC,
};
pub use config::{AdamConfig, DatasetSelector, TrainConfig};
pub use metrics::{metrics_line, read_metrics, write_metrics};
pub use trainer::{evaluate, train, EpochMetrics, EvalReport, TrainHistory, TrainOutcome};

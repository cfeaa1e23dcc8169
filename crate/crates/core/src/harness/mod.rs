//! Experiment engine: configs, the training loop, metrics, checkpoints,
//! embedding export and paired comparisons.

mod checkpoint;
mod compare;
mod config;
mod embed;
mod metrics;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use compare::{compare_runs, write_comparison, Comparison, PairedRow, WinCount, COMPARISON_HEADER};
pub use config::{lr_at, DataConfig, DataSource, ExperimentConfig, PreparedData, Preset, TrainConfig};
pub use embed::{embed, export_embeddings, read_embeddings, Embeddings};
pub use metrics::{read_metrics, write_metrics, METRICS_HEADER};
pub use train::{
    epoch_seed, evaluate, min_norm_pairwise_margin, model_gradients, model_objective,
    selection_rng, train_run, Evaluation, MetricsRecord, RunSummary, StepLog, Trainer,
};

//! Toy classification harness for the wavelet units.

pub mod checkpoint;
pub mod data;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod optim;
mod train;

pub use data::{kfold_splits, FoldSplit, SyntheticDataset, SyntheticSpec};
pub use loss::{cross_entropy, total_loss};
pub use metrics::{summarize, to_csv, MetricRow, Summary};
pub use net::{PoolKind, SitePolicy, StrideKind, ToyNet};
pub use optim::Adam;
pub use train::{
    evaluate, evaluate_indices, experiment_data, run_experiment, train, EvalReport, ExperimentSpec,
    FoldResult, TrainConfig, TrainOutcome,
};

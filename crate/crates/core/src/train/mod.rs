//! Training loop, evaluation metrics and labelled tasks.

mod config;
mod fit;
mod metrics;
mod model;
mod task;

pub use config::{BankRefresh, TrainConfig};
pub use fit::{EpochRecord, Prediction, RelMoss, SynthRecord, TrainOutcome};
pub use metrics::{balanced_accuracy, g_mean, ConfusionMatrix, MetricsReport};
pub use model::{combined_loss, LossOutput, RelMossModel, SynthSpec};
pub use task::{Split, Task};

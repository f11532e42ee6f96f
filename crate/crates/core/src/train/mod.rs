//! Losses, Adam, gradient clipping and the training loop.

mod adam;
mod config;
pub mod gradcheck;
mod loss;
mod model;
mod trainer;

pub use adam::{adam_step, Adam, AdamConfig};
pub use config::{TaskSource, TaskSpec, TrainConfig};
pub use gradcheck::{gradcheck, FaultInjection, GradcheckConfig, GradcheckReport, GroupReport};
pub use loss::{cross_entropy_masked, mse_loss, softmax_xent_row};
pub use model::{shard_ranges, GateTap, Model};
pub use trainer::{build_model, train_loop, MetricsRecord, Seeds, TrainSummary};

//! MSE training with Adam, cosine annealing and pushforward windows, plus the
//! GNOC checkpoint file.

mod adam;
mod checkpoint;
mod loss;
mod pushforward;
mod schedule;
mod trainer;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{Checkpoint, CheckpointMeta, DatasetInfo, EpochRecord, Section, GNOC_MAGIC, GNOC_VERSION};
pub use loss::mse_loss;
pub use pushforward::{pushforward_loss, pushforward_step, PushforwardOutcome};
pub use schedule::cosine_lr;
pub use trainer::{split_samples, train_loop, train_session, TrainConfig, TrainSession};

//! Minibatch objective, Adam with global-norm clipping, the epoch loop and
//! checkpoints.

mod checkpoint;
mod config;
mod data;
mod objective;
mod optim;
mod train;

pub use checkpoint::{init_from_checkpoint, Checkpoint, CheckpointMeta};
pub use config::TrainConfig;
pub use data::{batch_error, quality, TaskData};
pub use objective::{elbo_graph, elbo_loss, is_trainable, loss_and_grads, LossParts, Objective};
pub use optim::{adam_step, clip_gradients, AdamState, BETA1, BETA2, EPSILON};
pub use train::{initial_model, train, EpochHook, MetricsRecord, RunStatus, TrainOutcome};

//! Losses, the mini-batch training loop, and checkpoints.

pub mod checkpoint;
mod config;
mod fit;
mod loss;

pub use checkpoint::{load_checkpoint, load_checkpoint_with, save_checkpoint, save_checkpoint_with, Metadata};
pub use config::TrainConfig;
pub use fit::{fit, fit_with, EpochRecord, StopReason, Trainable, TrainObserver, TrainReport};
pub use loss::{kl_graph, kl_loss, mse_graph, mse_loss, EPSILON_FLOOR};

//! Training loops (contrastive and triplet) and batch inference.

mod config;
mod infer;
mod mode;
mod train;

pub use config::TrainConfig;
pub use infer::{embed_images, inference_embed};
pub use mode::TrainMode;
pub use train::{train, train_images, LossTrace, StepLoss, TrainOutput, Trainer};

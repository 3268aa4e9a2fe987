//! Augmentation, NT-Xent and the contrastive training step.

mod augment;
mod loss;
mod train;
mod views;

pub use augment::{augment, AugmentConfig};
pub use loss::{nt_xent, nt_xent_loss};
pub use train::{StepRecord, StepStreams, TrainConfig, Trainer};
pub use views::{check_pairing, make_view_batch, ViewBatch};

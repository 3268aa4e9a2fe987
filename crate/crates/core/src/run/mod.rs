//! Run orchestration behind the command-line subcommands.

pub mod ablate;
pub mod config;
pub mod probe;
pub mod train;

pub use ablate::{cmd_ablate, Sweep, VariantResult};
pub use config::{Overrides, Profile, RunConfig};
pub use probe::{cmd_eval, cmd_probe, ProbeReport};
pub use train::{cmd_train_ssl, TrainOutcome};

//! Dataset ingestion, normalization, checkpoints and metrics export.

pub mod checkpoint;
pub mod cifar;
pub mod metrics;
pub mod stats;
pub mod synthetic;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use cifar::{first_classes, load_cifar10, Dataset, Split, CLASS_NAMES};
pub use metrics::{export_metrics, format_metrics, parse_metrics, read_metrics, MetricsRecord};
pub use stats::ChannelStats;
pub use synthetic::write_synthetic_cifar;

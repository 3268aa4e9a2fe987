//! Hilbert-Schmidt tracking, linear probing and confusion matrices.

mod hs;
mod probe;

pub use hs::{gram_matrix, hs_distance, HsReport};
pub use probe::{
    evaluate, extract_features, probe_train, train_linear_probe, ConfusionMatrix, Evaluation,
    ProbeConfig, ProbeOutcome,
};

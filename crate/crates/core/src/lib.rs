//! Hybrid quantum-classical contrastive self-supervised learning.

pub mod classical_nn;
pub mod contrastive;
pub mod data_io;
pub mod error;
pub mod metrics_probe;
pub mod qnn;
pub mod quantum_sim;
pub mod rng;
pub mod run;

pub use error::{Error, ErrorCategory, Result};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

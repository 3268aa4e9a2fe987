//! The quantum representation network.
//!
//! Inputs are squashed into `(0, π)` by [`map_to_angle`], loaded with one
//! `RX` per qubit, and followed by a layered ansatz. Outputs are per-qubit
//! `<Z>` values, exact or averaged over a finite number of shots.

mod ansatz;
mod encoding;
mod layer;

pub use ansatz::{build_all_to_all_ansatz, build_ring_ansatz, AnsatzKind};
pub use encoding::{build_data_loader, map_to_angle, map_to_angle_derivative};
pub use layer::{ExecutionMode, QnnConfig, QnnGradients, QnnLayer};

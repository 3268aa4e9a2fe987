//! Dense statevector simulation.
//!
//! Amplitudes live in a flat array indexed by the computational basis
//! integer, with qubit 0 as the least significant bit. Gates are applied in
//! place with stride loops; no `2^W x 2^W` matrix is ever built here.
//!
//! Rotation convention: `R_P(θ) = exp(-i θ P / 2)`, so `RX(π)|0> = -i|1>`.

mod circuit;
mod gate;
mod measure;
mod state;

pub use circuit::{run_circuit, CircuitProgram, Instruction, Slot};
pub use gate::{apply_gate, Gate, GateKind};
pub use measure::{expectation_z, expectation_z_all, sample_expectation_z};
pub use state::Statevector;

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 24;

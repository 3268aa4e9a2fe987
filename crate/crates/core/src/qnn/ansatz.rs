use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum_sim::{CircuitProgram, GateKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzKind {
    /// Per layer: `RY` on every qubit, then `CRX(q -> q+1 mod W)` around the ring.
    Ring,
    /// Per layer: `RY` on every qubit, then `CNOT(i -> j)` for all `i < j`;
    /// one extra `RY` row at the end.
    AllToAll,
}

impl AnsatzKind {
    pub fn param_count(self, width: usize, layers: usize) -> usize {
        match self {
            AnsatzKind::Ring => 2 * width * layers,
            AnsatzKind::AllToAll => width * layers + width,
        }
    }

    pub fn build(self, width: usize, layers: usize) -> Result<CircuitProgram> {
        match self {
            AnsatzKind::Ring => build_ring_ansatz(width, layers),
            AnsatzKind::AllToAll => build_all_to_all_ansatz(width, layers),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnsatzKind::Ring => "ring",
            AnsatzKind::AllToAll => "all",
        }
    }
}

impl std::str::FromStr for AnsatzKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(AnsatzKind::Ring),
            "all" | "all_to_all" | "all-to-all" => Ok(AnsatzKind::AllToAll),
            _ => Err(Error::Config(format!("unknown ansatz `{s}` (expected ring|all)"))),
        }
    }
}

fn check_shape(width: usize, layers: usize) -> Result<()> {
    if width < 2 {
        return Err(Error::InvalidArgument(format!(
            "ansatz needs at least 2 qubits, got {width}"
        )));
    }
    if layers == 0 {
        return Err(Error::InvalidArgument("ansatz needs at least one layer".into()));
    }
    Ok(())
}

pub fn build_ring_ansatz(width: usize, layers: usize) -> Result<CircuitProgram> {
    check_shape(width, layers)?;
    let mut p = CircuitProgram::new(width);
    for _ in 0..layers {
        for q in 0..width {
            p.push_trainable(GateKind::Ry, None, q)?;
        }
        for q in 0..width {
            p.push_trainable(GateKind::Crx, Some(q), (q + 1) % width)?;
        }
    }
    Ok(p)
}

pub fn build_all_to_all_ansatz(width: usize, layers: usize) -> Result<CircuitProgram> {
    check_shape(width, layers)?;
    let mut p = CircuitProgram::new(width);
    for _ in 0..layers {
        for q in 0..width {
            p.push_trainable(GateKind::Ry, None, q)?;
        }
        for i in 0..width {
            for j in i + 1..width {
                p.push_fixed(GateKind::Cnot, Some(i), j)?;
            }
        }
    }
    for q in 0..width {
        p.push_trainable(GateKind::Ry, None, q)?;
    }
    Ok(p)
}

use num_complex::Complex64;

use super::Statevector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    Ry,
    Crx,
    Cnot,
}

impl GateKind {
    pub fn is_parameterized(self) -> bool {
        !matches!(self, GateKind::Cnot)
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateKind::Crx | GateKind::Cnot)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Crx => "CRX",
            GateKind::Cnot => "CNOT",
        }
    }
}

/// A concrete gate application with its angle bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub control: Option<usize>,
    pub target: usize,
    pub angle: Option<f64>,
}

impl Gate {
    pub fn rx(target: usize, theta: f64) -> Self {
        Gate {
            kind: GateKind::Rx,
            control: None,
            target,
            angle: Some(theta),
        }
    }

    pub fn ry(target: usize, theta: f64) -> Self {
        Gate {
            kind: GateKind::Ry,
            control: None,
            target,
            angle: Some(theta),
        }
    }

    pub fn crx(control: usize, target: usize, theta: f64) -> Self {
        Gate {
            kind: GateKind::Crx,
            control: Some(control),
            target,
            angle: Some(theta),
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate {
            kind: GateKind::Cnot,
            control: Some(control),
            target,
            angle: None,
        }
    }

    /// Checks wires against a register width and the angle/control arity
    /// against the gate kind.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let check = |wire: usize| {
            if wire >= num_qubits {
                Err(Error::WireOutOfRange { wire, num_qubits })
            } else {
                Ok(())
            }
        };
        check(self.target)?;
        match (self.kind.is_controlled(), self.control) {
            (true, Some(c)) => {
                check(c)?;
                if c == self.target {
                    return Err(Error::DuplicateWire(c));
                }
            }
            (true, None) => {
                return Err(Error::InvalidArgument(format!(
                    "{} gate requires a control wire",
                    self.kind.name()
                )))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "{} gate takes no control wire",
                    self.kind.name()
                )))
            }
            (false, None) => {}
        }
        match (self.kind.is_parameterized(), self.angle) {
            (true, None) => Err(Error::MissingParameter(self.kind.name())),
            (true, Some(a)) if !a.is_finite() => {
                Err(Error::NonFinite(format!("{} angle {a}", self.kind.name())))
            }
            (false, Some(_)) => Err(Error::InvalidArgument(format!(
                "{} gate takes no angle",
                self.kind.name()
            ))),
            _ => Ok(()),
        }
    }

    /// The 2x2 block acting on the target (row-major).
    fn block(&self) -> [Complex64; 4] {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        match self.kind {
            GateKind::Rx | GateKind::Crx => {
                let (s, c) = (self.angle.unwrap_or(0.0) / 2.0).sin_cos();
                let c = Complex64::new(c, 0.0);
                let mis = Complex64::new(0.0, -s);
                [c, mis, mis, c]
            }
            GateKind::Ry => {
                let (s, c) = (self.angle.unwrap_or(0.0) / 2.0).sin_cos();
                [
                    Complex64::new(c, 0.0),
                    Complex64::new(-s, 0.0),
                    Complex64::new(s, 0.0),
                    Complex64::new(c, 0.0),
                ]
            }
            GateKind::Cnot => [zero, one, one, zero],
        }
    }
}

/// Applies `gate` and returns the new state.
pub fn apply_gate(mut state: Statevector, gate: &Gate) -> Result<Statevector> {
    state.apply(gate)?;
    Ok(state)
}

impl Statevector {
    /// In-place gate application.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.num_qubits())?;
        self.apply_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        let block = gate.block();
        let t = gate.target;
        match gate.control {
            None => apply_block(self.amplitudes_mut(), t, 0, &block),
            Some(c) => apply_block(self.amplitudes_mut(), t, 1 << c, &block),
        }
    }
}

/// Stride loop over all index pairs `(i, i | 1<<target)` with the target bit
/// clear in `i`; pairs where `i & control_mask != control_mask` are skipped.
fn apply_block(amps: &mut [Complex64], target: usize, control_mask: usize, m: &[Complex64; 4]) {
    let stride = 1usize << target;
    let dim = amps.len();
    let mut base = 0;
    while base < dim {
        for i in base..base + stride {
            if i & control_mask != control_mask {
                continue;
            }
            let j = i + stride;
            let a0 = amps[i];
            let a1 = amps[j];
            amps[i] = m[0] * a0 + m[1] * a1;
            amps[j] = m[2] * a0 + m[3] * a1;
        }
        base += stride << 1;
    }
}

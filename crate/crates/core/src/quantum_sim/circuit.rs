use super::{Gate, GateKind, Statevector};
use crate::error::{Error, Result};

/// Where a parameterized instruction reads its angle from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Trainable(usize),
    Input(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub kind: GateKind,
    pub control: Option<usize>,
    pub target: usize,
    pub slot: Option<Slot>,
}

/// An ordered gate list whose angles are bound at run time.
///
/// Trainable and input slots form two independent index spaces, each
/// contiguous from 0, and every slot is referenced by exactly one gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitProgram {
    num_qubits: usize,
    instructions: Vec<Instruction>,
    num_trainable: usize,
    num_inputs: usize,
}

impl CircuitProgram {
    pub fn new(num_qubits: usize) -> Self {
        CircuitProgram {
            num_qubits,
            instructions: Vec::new(),
            num_trainable: 0,
            num_inputs: 0,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn num_trainable(&self) -> usize {
        self.num_trainable
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    /// Appends a gate reading its angle from the next free trainable slot.
    pub fn push_trainable(
        &mut self,
        kind: GateKind,
        control: Option<usize>,
        target: usize,
    ) -> Result<Slot> {
        let slot = Slot::Trainable(self.num_trainable);
        self.push(Instruction {
            kind,
            control,
            target,
            slot: Some(slot),
        })?;
        Ok(slot)
    }

    /// Appends a gate reading its angle from the next free input slot.
    pub fn push_input(
        &mut self,
        kind: GateKind,
        control: Option<usize>,
        target: usize,
    ) -> Result<Slot> {
        let slot = Slot::Input(self.num_inputs);
        self.push(Instruction {
            kind,
            control,
            target,
            slot: Some(slot),
        })?;
        Ok(slot)
    }

    pub fn push_fixed(&mut self, kind: GateKind, control: Option<usize>, target: usize) -> Result<()> {
        self.push(Instruction {
            kind,
            control,
            target,
            slot: None,
        })
    }

    /// Appends an instruction. The slot must be exactly the next unused
    /// index of its kind.
    pub fn push(&mut self, ins: Instruction) -> Result<()> {
        let probe = Gate {
            kind: ins.kind,
            control: ins.control,
            target: ins.target,
            angle: ins.slot.map(|_| 0.0),
        };
        probe.validate(self.num_qubits)?;
        match ins.slot {
            Some(Slot::Trainable(i)) if i == self.num_trainable => self.num_trainable += 1,
            Some(Slot::Input(i)) if i == self.num_inputs => self.num_inputs += 1,
            None => {}
            Some(s) => {
                return Err(Error::InvalidArgument(format!(
                    "slot {s:?} is not the next contiguous slot"
                )))
            }
        }
        self.instructions.push(ins);
        Ok(())
    }

    /// Concatenates `other` after `self`, renumbering its slots past ours.
    pub fn append(&mut self, other: &CircuitProgram) -> Result<()> {
        if other.num_qubits != self.num_qubits {
            return Err(Error::Shape(format!(
                "cannot append a {}-qubit fragment to a {}-qubit program",
                other.num_qubits, self.num_qubits
            )));
        }
        let (t0, i0) = (self.num_trainable, self.num_inputs);
        for ins in &other.instructions {
            let slot = ins.slot.map(|s| match s {
                Slot::Trainable(k) => Slot::Trainable(k + t0),
                Slot::Input(k) => Slot::Input(k + i0),
            });
            self.push(Instruction { slot, ..*ins })?;
        }
        Ok(())
    }

    pub(crate) fn check_bindings(&self, trainable: &[f64], inputs: &[f64]) -> Result<()> {
        if trainable.len() != self.num_trainable {
            return Err(Error::SlotOutOfRange {
                kind: "trainable",
                slot: self.num_trainable.max(trainable.len()).saturating_sub(1),
                available: trainable.len(),
            });
        }
        if inputs.len() != self.num_inputs {
            return Err(Error::SlotOutOfRange {
                kind: "input",
                slot: self.num_inputs.max(inputs.len()).saturating_sub(1),
                available: inputs.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn bind(&self, ins: &Instruction, trainable: &[f64], inputs: &[f64]) -> Gate {
        let angle = ins.slot.map(|s| match s {
            Slot::Trainable(k) => trainable[k],
            Slot::Input(k) => inputs[k],
        });
        Gate {
            kind: ins.kind,
            control: ins.control,
            target: ins.target,
            angle,
        }
    }

    /// Applies instructions `range` to `state` in place.
    pub(crate) fn run_range(
        &self,
        state: &mut Statevector,
        range: std::ops::Range<usize>,
        trainable: &[f64],
        inputs: &[f64],
    ) {
        for ins in &self.instructions[range] {
            state.apply_unchecked(&self.bind(ins, trainable, inputs));
        }
    }

    /// Runs the program from `|0...0>`.
    pub fn run(&self, trainable: &[f64], inputs: &[f64]) -> Result<Statevector> {
        self.check_bindings(trainable, inputs)?;
        if let Some(x) = trainable.iter().chain(inputs).find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("circuit angle {x}")));
        }
        let mut state = Statevector::zero(self.num_qubits)?;
        self.run_range(&mut state, 0..self.instructions.len(), trainable, inputs);
        Ok(state)
    }
}

pub fn run_circuit(program: &CircuitProgram, trainable: &[f64], inputs: &[f64]) -> Result<Statevector> {
    program.run(trainable, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use qssl_oracles::dense::{self, DenseGate};
    use rand::{Rng, SeedableRng};

    #[test]
    fn empty_program_leaves_zero_state() {
        let s = CircuitProgram::new(2).run(&[], &[]).unwrap();
        let expect = [1.0, 0.0, 0.0, 0.0];
        for (a, e) in s.amplitudes().iter().zip(expect) {
            assert_eq!(*a, Complex64::new(e, 0.0));
        }
    }

    #[test]
    fn slot_count_mismatch_is_an_error() {
        let mut p = CircuitProgram::new(2);
        p.push_trainable(GateKind::Ry, None, 0).unwrap();
        p.push_input(GateKind::Rx, None, 1).unwrap();
        assert!(matches!(
            p.run(&[], &[0.1]),
            Err(Error::SlotOutOfRange { kind: "trainable", .. })
        ));
        assert!(matches!(
            p.run(&[0.1], &[0.1, 0.2]),
            Err(Error::SlotOutOfRange { kind: "input", .. })
        ));
        assert!(p.run(&[0.1], &[0.2]).is_ok());
    }

    #[test]
    fn non_contiguous_slots_rejected() {
        let mut p = CircuitProgram::new(2);
        let err = p.push(Instruction {
            kind: GateKind::Ry,
            control: None,
            target: 0,
            slot: Some(Slot::Trainable(3)),
        });
        assert!(err.is_err());
    }

    #[test]
    fn append_renumbers_slots() {
        let mut a = CircuitProgram::new(2);
        a.push_trainable(GateKind::Ry, None, 0).unwrap();
        let mut b = CircuitProgram::new(2);
        b.push_trainable(GateKind::Crx, Some(0), 1).unwrap();
        b.push_input(GateKind::Rx, None, 1).unwrap();
        a.append(&b).unwrap();
        assert_eq!(a.num_trainable(), 2);
        assert_eq!(a.num_inputs(), 1);
        assert_eq!(a.instructions()[1].slot, Some(Slot::Trainable(1)));
    }

    #[test]
    fn three_qubit_programs_match_kronecker_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let kinds = [GateKind::Rx, GateKind::Ry, GateKind::Crx, GateKind::Cnot];
        for _ in 0..20 {
            let mut p = CircuitProgram::new(3);
            let mut plan = Vec::new();
            for _ in 0..18 {
                let kind = kinds[rng.random_range(0..4)];
                let t = rng.random_range(0..3);
                let c = (t + rng.random_range(1..3)) % 3;
                let control = kind.is_controlled().then_some(c);
                let from_input = rng.random_bool(0.3);
                match (kind.is_parameterized(), from_input) {
                    (false, _) => p.push_fixed(kind, control, t).unwrap(),
                    (true, true) => {
                        p.push_input(kind, control, t).unwrap();
                    }
                    (true, false) => {
                        p.push_trainable(kind, control, t).unwrap();
                    }
                }
                plan.push((kind, control, t));
            }
            let trainable: Vec<f64> = (0..p.num_trainable()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let inputs: Vec<f64> = (0..p.num_inputs()).map(|_| rng.random_range(0.0..3.0)).collect();
            let state = p.run(&trainable, &inputs).unwrap();

            let dense_gates: Vec<DenseGate> = p
                .instructions()
                .iter()
                .map(|ins| {
                    let theta = match ins.slot {
                        Some(Slot::Trainable(k)) => trainable[k],
                        Some(Slot::Input(k)) => inputs[k],
                        None => 0.0,
                    };
                    match ins.kind {
                        GateKind::Rx => DenseGate::Rx(ins.target, theta),
                        GateKind::Ry => DenseGate::Ry(ins.target, theta),
                        GateKind::Crx => DenseGate::Crx(ins.control.unwrap(), ins.target, theta),
                        GateKind::Cnot => DenseGate::Cnot(ins.control.unwrap(), ins.target),
                    }
                })
                .collect();
            let expect = dense::simulate(&dense_gates, 3);
            for (a, b) in state.amplitudes().iter().zip(&expect) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }
}

//! Dense-matrix circuit simulation via explicit Kronecker products.
//!
//! Qubit 0 is the least significant bit of the basis index, so the full
//! operator is `op[W-1] ⊗ ... ⊗ op[0]`.

use num_complex::Complex64;

pub type Matrix = Vec<Vec<Complex64>>;

#[derive(Debug, Clone, Copy)]
pub enum DenseGate {
    Rx(usize, f64),
    Ry(usize, f64),
    /// (control, target, angle)
    Crx(usize, usize, f64),
    /// (control, target)
    Cnot(usize, usize),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> Matrix {
    let mut m = vec![vec![c(0.0, 0.0); dim]; dim];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(1.0, 0.0);
    }
    m
}

pub fn rx(theta: f64) -> Matrix {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co, 0.0), c(0.0, -s)], vec![c(0.0, -s), c(co, 0.0)]]
}

pub fn ry(theta: f64) -> Matrix {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]
}

pub fn pauli_x() -> Matrix {
    vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]
}

pub fn pauli_z() -> Matrix {
    vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]]
}

fn proj0() -> Matrix {
    vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]
}

fn proj1() -> Matrix {
    vec![vec![c(0.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == c(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn add(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

/// Full operator for a tensor product where `ops[q]` acts on qubit `q`.
pub fn tensor_product(ops: &[Matrix]) -> Matrix {
    let mut full = vec![vec![c(1.0, 0.0)]];
    for op in ops.iter().rev() {
        full = kron(&full, op);
    }
    full
}

/// Single-qubit operator `op` on `target`, identity elsewhere.
pub fn embed(op: &Matrix, target: usize, num_qubits: usize) -> Matrix {
    let ops: Vec<Matrix> = (0..num_qubits)
        .map(|q| if q == target { op.clone() } else { identity(2) })
        .collect();
    tensor_product(&ops)
}

/// `|0><0|_c ⊗ 1 + |1><1|_c ⊗ op_t`
pub fn controlled(op: &Matrix, control: usize, target: usize, num_qubits: usize) -> Matrix {
    let off: Vec<Matrix> = (0..num_qubits)
        .map(|q| if q == control { proj0() } else { identity(2) })
        .collect();
    let on: Vec<Matrix> = (0..num_qubits)
        .map(|q| {
            if q == control {
                proj1()
            } else if q == target {
                op.clone()
            } else {
                identity(2)
            }
        })
        .collect();
    add(&tensor_product(&off), &tensor_product(&on))
}

pub fn gate_matrix(gate: DenseGate, num_qubits: usize) -> Matrix {
    match gate {
        DenseGate::Rx(t, theta) => embed(&rx(theta), t, num_qubits),
        DenseGate::Ry(t, theta) => embed(&ry(theta), t, num_qubits),
        DenseGate::Crx(ctl, t, theta) => controlled(&rx(theta), ctl, t, num_qubits),
        DenseGate::Cnot(ctl, t) => controlled(&pauli_x(), ctl, t, num_qubits),
    }
}

/// Product of all gate matrices (later gates on the left).
pub fn circuit_unitary(gates: &[DenseGate], num_qubits: usize) -> Matrix {
    let mut u = identity(1 << num_qubits);
    for &g in gates {
        u = matmul(&gate_matrix(g, num_qubits), &u);
    }
    u
}

pub fn apply(u: &Matrix, state: &[Complex64]) -> Vec<Complex64> {
    u.iter()
        .map(|row| row.iter().zip(state).map(|(a, b)| a * b).sum())
        .collect()
}

/// Runs the circuit on `|0...0>`.
pub fn simulate(gates: &[DenseGate], num_qubits: usize) -> Vec<Complex64> {
    let mut zero = vec![c(0.0, 0.0); 1 << num_qubits];
    zero[0] = c(1.0, 0.0);
    apply(&circuit_unitary(gates, num_qubits), &zero)
}

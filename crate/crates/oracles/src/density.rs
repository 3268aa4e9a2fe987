//! Explicit density-matrix constructions.

use crate::dense::{embed, pauli_z, Matrix};
use num_complex::Complex64;

pub fn outer(psi: &[Complex64]) -> Matrix {
    psi.iter()
        .map(|a| psi.iter().map(|b| a * b.conj()).collect())
        .collect()
}

fn scale_add(acc: &mut Matrix, m: &Matrix, w: f64) {
    for (ra, rm) in acc.iter_mut().zip(m) {
        for (a, x) in ra.iter_mut().zip(rm) {
            *a += x * w;
        }
    }
}

fn trace_product(a: &Matrix, b: &Matrix) -> Complex64 {
    let n = a.len();
    let mut t = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            t += a[i][k] * b[k][i];
        }
    }
    t
}

/// `tr(rho Z_q)` with `rho = |psi><psi|`.
pub fn expectation_z(psi: &[Complex64], qubit: usize) -> f64 {
    let num_qubits = psi.len().trailing_zeros() as usize;
    let rho = outer(psi);
    let z = embed(&pauli_z(), qubit, num_qubits);
    trace_product(&rho, &z).re
}

/// Per-pair `tr((rho_i - sigma_i)^2)` where views `2i` and `2i+1` form pair `i`.
pub fn hs_distances(states: &[Vec<Complex64>]) -> Vec<f64> {
    let n_views = states.len();
    assert!(n_views % 2 == 0 && n_views >= 4);
    let n_pairs = n_views / 2;
    let dim = states[0].len();
    let projectors: Vec<Matrix> = states.iter().map(|s| outer(s)).collect();
    (0..n_pairs)
        .map(|i| {
            let mut diff = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
            for (v, p) in projectors.iter().enumerate() {
                let w = if v / 2 == i {
                    0.5
                } else {
                    -1.0 / (2.0 * n_pairs as f64 - 2.0)
                };
                scale_add(&mut diff, p, w);
            }
            trace_product(&diff, &diff).re
        })
        .collect()
}

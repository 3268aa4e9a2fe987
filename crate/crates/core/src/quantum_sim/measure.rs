use rand::Rng;

use super::Statevector;
use crate::error::{Error, Result};

/// Exact `<Z_qubit>`: `sum_b (+1 if bit clear else -1) |a_b|^2`.
pub fn expectation_z(state: &Statevector, qubit: usize) -> Result<f64> {
    state.check_wire(qubit)?;
    let mask = 1usize << qubit;
    let value = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(b, a)| if b & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum::<f64>();
    Ok(value.clamp(-1.0, 1.0))
}

/// Exact `<Z_q>` for every qubit in one pass over the amplitudes.
pub fn expectation_z_all(state: &Statevector) -> Vec<f64> {
    let w = state.num_qubits();
    let mut out = vec![0.0; w];
    for (b, a) in state.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        for (q, o) in out.iter_mut().enumerate() {
            if b >> q & 1 == 0 {
                *o += p;
            } else {
                *o -= p;
            }
        }
    }
    for o in &mut out {
        *o = o.clamp(-1.0, 1.0);
    }
    out
}

/// Shot-sampled `<Z_q>` estimates.
///
/// Each shot draws one full basis bitstring from `|a_b|^2`; every requested
/// qubit reads its ±1 eigenvalue from that same bitstring, as a hardware
/// measurement of all qubits would.
pub fn sample_expectation_z<R: Rng + ?Sized>(
    state: &Statevector,
    qubits: &[usize],
    shots: u32,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    for &q in qubits {
        state.check_wire(q)?;
    }
    let mut cdf = Vec::with_capacity(state.dim());
    let mut acc = 0.0;
    for a in state.amplitudes() {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let total = acc;
    let last = cdf.len() - 1;
    let mut sums = vec![0i64; qubits.len()];
    for _ in 0..shots {
        let u = rng.random::<f64>() * total;
        let outcome = cdf.partition_point(|&c| c <= u).min(last);
        for (s, &q) in sums.iter_mut().zip(qubits) {
            *s += if outcome >> q & 1 == 0 { 1 } else { -1 };
        }
    }
    Ok(sums.into_iter().map(|s| s as f64 / shots as f64).collect())
}

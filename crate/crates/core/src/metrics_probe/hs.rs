//! Hilbert-Schmidt distance between positive-pair and rest-of-batch
//! ensembles.
//!
//! With `G_ab = |<ψ_a|ψ_b>|²`, pair `P = {a, b}` and `M = 2N - 2` other
//! views, `ρ` is the equal mixture over `P` and `σ` over the rest:
//!
//! ```text
//! tr ρ²  = Σ_{c,d∈P} G_cd / 4
//! tr σ²  = Σ_{c,d∉P} G_cd / M²
//! tr ρσ  = Σ_{c∈P,d∉P} G_cd / (2M)
//! D      = tr ρ² + tr σ² - 2 tr ρσ
//! ```
//!
//! Row sums of `G` give every term in `O(1)` per pair.

use rayon::prelude::*;

use crate::contrastive::check_pairing;
use crate::error::{Error, Result};
use crate::quantum_sim::Statevector;

#[derive(Debug, Clone, PartialEq)]
pub struct HsReport {
    /// One value per positive pair, ordered by the pair's lower view index.
    pub per_pair: Vec<f64>,
    pub mean: f64,
}

pub fn gram_matrix(states: &[Statevector]) -> Result<Vec<Vec<f64>>> {
    (0..states.len())
        .into_par_iter()
        .map(|a| {
            states
                .iter()
                .map(|b| states[a].inner(b).map(|c| c.norm_sqr()))
                .collect()
        })
        .collect()
}

pub fn hs_distance(states: &[Statevector], pair_index: &[usize]) -> Result<HsReport> {
    check_pairing(pair_index)?;
    if states.len() != pair_index.len() {
        return Err(Error::Shape(format!(
            "{} statevectors for {} views",
            states.len(),
            pair_index.len()
        )));
    }
    let w = states[0].num_qubits();
    if states.iter().any(|s| s.num_qubits() != w) {
        return Err(Error::Shape("statevectors have different widths".into()));
    }
    let g = gram_matrix(states)?;
    let rows: Vec<f64> = g.iter().map(|r| r.iter().sum()).collect();
    let total: f64 = rows.iter().sum();
    let m = (states.len() - 2) as f64;

    let per_pair: Vec<f64> = (0..states.len())
        .filter(|&a| a < pair_index[a])
        .map(|a| {
            let b = pair_index[a];
            let inner = g[a][a] + g[b][b] + g[a][b] + g[b][a];
            let cross = rows[a] + rows[b] - inner;
            let outer = total - 2.0 * (rows[a] + rows[b]) + inner;
            let d = inner / 4.0 + outer / (m * m) - cross / m;
            d.max(0.0)
        })
        .collect();
    let mean = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    Ok(HsReport { per_pair, mean })
}

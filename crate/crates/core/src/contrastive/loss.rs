//! NT-Xent contrastive loss.
//!
//! Rows of `z` are normalized to `u`; with `s_ab = u_a·u_b / τ` each anchor
//! contributes `-s_{a,p(a)} + log Σ_{b≠a} exp(s_ab)` and the loss is the sum
//! over all `2N` anchors. Writing `C_ab = softmax_a(b) - [b = p(a)]`, the
//! gradient is `∂L/∂u_a = Σ_b (C_ab + C_ba) u_b / τ`, projected onto the
//! tangent space of the sphere and divided by `|z_a|`.

use super::views::check_pairing;
use crate::classical_nn::{Tape, Tensor, Var};
use crate::error::{Error, Result};

struct Forward {
    loss: f64,
    grad: Vec<f64>,
}

fn compute(z: &Tensor, pair_index: &[usize], tau: f64, want_grad: bool) -> Result<Forward> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    check_pairing(pair_index)?;
    let [n, w]: [usize; 2] = z
        .shape()
        .try_into()
        .map_err(|_| Error::Shape(format!("NT-Xent expects [2N, W], got {:?}", z.shape())))?;
    if n != pair_index.len() {
        return Err(Error::Shape(format!("{n} rows for {} paired views", pair_index.len())));
    }
    let mut u = z.data().to_vec();
    let mut norms = Vec::with_capacity(n);
    for (a, row) in u.chunks_mut(w).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonFinite(format!("row {a} of z has norm {norm}; cannot normalize")));
        }
        row.iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    let dot = |a: usize, b: usize| -> f64 {
        u[a * w..(a + 1) * w]
            .iter()
            .zip(&u[b * w..(b + 1) * w])
            .map(|(x, y)| x * y)
            .sum()
    };
    let mut c = vec![0.0; n * n];
    let mut loss = 0.0;
    for a in 0..n {
        let s: Vec<f64> = (0..n).map(|b| dot(a, b) / tau).collect();
        let m = (0..n).filter(|&b| b != a).map(|b| s[b]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n).filter(|&b| b != a).map(|b| (s[b] - m).exp()).sum();
        loss += m + denom.ln() - s[pair_index[a]];
        for b in (0..n).filter(|&b| b != a) {
            c[a * n + b] = (s[b] - m).exp() / denom;
        }
        c[a * n + pair_index[a]] -= 1.0;
    }
    if !want_grad {
        return Ok(Forward { loss, grad: Vec::new() });
    }
    let mut grad = vec![0.0; n * w];
    for a in 0..n {
        let mut g = vec![0.0; w];
        for b in 0..n {
            let k = (c[a * n + b] + c[b * n + a]) / tau;
            if k != 0.0 {
                g.iter_mut().zip(&u[b * w..(b + 1) * w]).for_each(|(gi, ub)| *gi += k * ub);
            }
        }
        let ua = &u[a * w..(a + 1) * w];
        let radial: f64 = g.iter().zip(ua).map(|(x, y)| x * y).sum();
        for (d, (gi, ui)) in grad[a * w..(a + 1) * w].iter_mut().zip(g.iter().zip(ua)) {
            *d = (gi - radial * ui) / norms[a];
        }
    }
    Ok(Forward { loss, grad })
}

/// Loss value only.
pub fn nt_xent(z: &Tensor, pair_index: &[usize], tau: f64) -> Result<f64> {
    compute(z, pair_index, tau, false).map(|f| f.loss)
}

/// Records the loss on `tape` with its analytic gradient.
pub fn nt_xent_loss(tape: &mut Tape, z: Var, pair_index: &[usize], tau: f64) -> Result<Var> {
    let f = compute(tape.value(z), pair_index, tau, tape.grad_enabled())?;
    let shape = tape.value(z).shape().to_vec();
    let grad = f.grad;
    tape.push_op(
        Tensor::scalar(f.loss),
        vec![z],
        Box::new(move |g, _, _| {
            let s = g.data()[0];
            Ok(vec![Tensor::new(shape.clone(), grad.iter().map(|v| v * s).collect())?])
        }),
    )
}

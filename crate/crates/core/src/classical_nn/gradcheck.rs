//! Finite-difference checks for tape ops (test-only).

use qssl_oracles::finite_diff::{central_gradient, relative_error};
use rand::Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Evaluates `build` with each input bound as a parameter and compares every
/// analytic partial with a central difference. Returns the worst relative
/// error.
pub fn max_rel_error<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = vals.iter().cloned().map(|t| tape.constant(t)).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| tape.param(i, t.clone()))
        .collect();
    let loss = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads.param(i).unwrap();
        let coords: Vec<usize> = (0..t.len()).collect();
        let fd = central_gradient(
            |x| {
                let mut vals = inputs.to_vec();
                vals[i] = Tensor::new(t.shape().to_vec(), x.to_vec()).unwrap();
                eval(&vals)
            },
            t.data(),
            &coords,
            STEP,
        );
        for (a, f) in analytic.data().iter().zip(&fd) {
            worst = worst.max(relative_error(*a, *f, 1e-3));
        }
    }
    worst
}

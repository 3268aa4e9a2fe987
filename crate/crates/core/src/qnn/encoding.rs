use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quantum_sim::{CircuitProgram, GateKind};

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `π · logistic(v)`: a smooth, strictly increasing bijection onto `(0, π)`.
pub fn map_to_angle(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("QNN input {v}")));
    }
    Ok(PI * logistic(v))
}

/// `d/dv [π · logistic(v)] = π s (1 - s)`.
pub fn map_to_angle_derivative(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("QNN input {v}")));
    }
    let s = logistic(v);
    Ok(PI * s * (1.0 - s))
}

/// One `RX` per qubit, qubit `k` reading input slot `k`.
pub fn build_data_loader(width: usize) -> Result<CircuitProgram> {
    if width == 0 {
        return Err(Error::InvalidArgument("data loader width must be >= 1".into()));
    }
    let mut p = CircuitProgram::new(width);
    for q in 0..width {
        p.push_input(GateKind::Rx, None, q)?;
    }
    Ok(p)
}

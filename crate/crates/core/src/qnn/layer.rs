use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_data_loader, map_to_angle, map_to_angle_derivative, AnsatzKind};
use crate::error::{Error, Result};
use crate::quantum_sim::{
    expectation_z_all, sample_expectation_z, CircuitProgram, Gate, GateKind, Slot, Statevector,
};
use crate::rng::SeedStream;

/// Serialized as `"exact"` or `"shots:N"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ExecutionMode {
    /// Infinite-shot limit: `<Z>` read from the amplitudes.
    Exact,
    /// `<Z>` averaged over this many sampled bitstrings.
    Shots(u32),
}

impl std::fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExecutionMode::Exact => write!(f, "exact"),
            ExecutionMode::Shots(n) => write!(f, "shots:{n}"),
        }
    }
}

impl std::str::FromStr for ExecutionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(ExecutionMode::Exact);
        }
        let n = s
            .strip_prefix("shots:")
            .and_then(|n| n.parse::<u32>().ok())
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (expected exact|shots:N)")))?;
        if n == 0 {
            return Err(Error::Config("shots must be at least 1".into()));
        }
        Ok(ExecutionMode::Shots(n))
    }
}

impl TryFrom<String> for ExecutionMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ExecutionMode> for String {
    fn from(m: ExecutionMode) -> String {
        m.to_string()
    }
}

/// Structural description of a QNN; the trainable angles live elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QnnConfig {
    pub width: usize,
    pub ansatz: AnsatzKind,
    pub layers: usize,
    pub mode: ExecutionMode,
}

impl QnnConfig {
    pub fn param_count(&self) -> usize {
        self.ansatz.param_count(self.width, self.layers)
    }

    /// Data loader followed by the ansatz. Input slots `0..W`, trainable
    /// slots `0..P`.
    pub fn program(&self) -> Result<CircuitProgram> {
        let mut p = build_data_loader(self.width)?;
        p.append(&self.ansatz.build(self.width, self.layers)?)?;
        Ok(p)
    }

    /// Uniform on `[-π, π]`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.param_count())
            .map(|_| rng.random_range(-PI..=PI))
            .collect()
    }
}

/// Jacobians of the `W` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct QnnGradients {
    width: usize,
    num_params: usize,
    /// `W x P`, row-major.
    d_params: Vec<f64>,
    /// `W x W`, row-major, with respect to the raw (pre-mapping) inputs.
    d_inputs: Vec<f64>,
}

impl QnnGradients {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    /// `d output[out] / d param[p]`
    pub fn d_param(&self, out: usize, p: usize) -> f64 {
        self.d_params[out * self.num_params + p]
    }

    /// `d output[out] / d input[k]`
    pub fn d_input(&self, out: usize, k: usize) -> f64 {
        self.d_inputs[out * self.width + k]
    }

    pub fn d_params_row(&self, out: usize) -> &[f64] {
        &self.d_params[out * self.num_params..(out + 1) * self.num_params]
    }

    pub fn d_inputs_row(&self, out: usize) -> &[f64] {
        &self.d_inputs[out * self.width..(out + 1) * self.width]
    }
}

/// Output of one forward evaluation.
#[derive(Debug, Clone)]
pub struct QnnEvaluation {
    pub outputs: Vec<f64>,
    /// The exact pre-measurement state (available in every mode).
    pub state: Statevector,
}

/// `(shift, coefficient)` pairs such that `df/dθ = Σ c · f(θ + shift)`.
///
/// `RX`/`RY` have a Pauli generator with eigenvalues ±1/2, so the two-term
/// ±π/2 rule is exact. `CRX` has generator `|1><1| ⊗ X/2` with eigenvalues
/// {0, ±1/2}, which needs the four-term rule to stay exact.
fn shift_rule(kind: GateKind) -> &'static [(f64, f64)] {
    const TWO_TERM: [(f64, f64); 2] = [(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)];
    const C1: f64 = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
    const C2: f64 = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
    const FOUR_TERM: [(f64, f64); 4] = [
        (FRAC_PI_2, C1),
        (-FRAC_PI_2, -C1),
        (3.0 * FRAC_PI_2, -C2),
        (-3.0 * FRAC_PI_2, C2),
    ];
    match kind {
        GateKind::Crx => &FOUR_TERM,
        _ => &TWO_TERM,
    }
}

/// A QNN together with its trainable angles.
#[derive(Debug, Clone)]
pub struct QnnLayer {
    config: QnnConfig,
    program: CircuitProgram,
    params: Vec<f64>,
}

impl QnnLayer {
    pub fn new(config: QnnConfig, params: Vec<f64>) -> Result<Self> {
        let program = config.program()?;
        if params.len() != program.num_trainable() {
            return Err(Error::Shape(format!(
                "{:?} ansatz with W={}, L={} takes {} parameters, got {}",
                config.ansatz,
                config.width,
                config.layers,
                program.num_trainable(),
                params.len()
            )));
        }
        if let Some(p) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("QNN parameter {p}")));
        }
        if let ExecutionMode::Shots(0) = config.mode {
            return Err(Error::InvalidArgument("shots must be at least 1".into()));
        }
        Ok(QnnLayer {
            config,
            program,
            params,
        })
    }

    pub fn config(&self) -> &QnnConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn program(&self) -> &CircuitProgram {
        &self.program
    }

    fn angles(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.config.width {
            return Err(Error::Shape(format!(
                "QNN of width {} given {} inputs",
                self.config.width,
                input.len()
            )));
        }
        input.iter().map(|&v| map_to_angle(v)).collect()
    }

    fn measure(&self, state: &Statevector, stream: SeedStream) -> Result<Vec<f64>> {
        match self.config.mode {
            ExecutionMode::Exact => Ok(expectation_z_all(state)),
            ExecutionMode::Shots(n) => {
                let qubits: Vec<usize> = (0..self.config.width).collect();
                sample_expectation_z(state, &qubits, n, &mut stream.rng())
            }
        }
    }

    /// Runs the circuit on the mapped inputs and measures every qubit.
    /// `stream` is only drawn from in shot mode.
    pub fn evaluate(&self, input: &[f64], stream: SeedStream) -> Result<QnnEvaluation> {
        let angles = self.angles(input)?;
        let state = self.program.run(&self.params, &angles)?;
        let outputs = self.measure(&state, stream.child(0))?;
        Ok(QnnEvaluation { outputs, state })
    }

    pub fn forward(&self, input: &[f64], stream: SeedStream) -> Result<Vec<f64>> {
        Ok(self.evaluate(input, stream)?.outputs)
    }

    /// Parameter-shift Jacobians for every trainable and input slot.
    ///
    /// Each shifted circuit shares the state prefix up to its gate. In shot
    /// mode every shifted evaluation samples from its own substream
    /// `stream/(1 + gate index)/(shift index)`.
    pub fn gradients(&self, input: &[f64], stream: SeedStream) -> Result<QnnGradients> {
        let angles = self.angles(input)?;
        self.program.check_bindings(&self.params, &angles)?;
        let width = self.config.width;
        let num_params = self.params.len();

        // States just before each parameterized instruction.
        let mut prefixes = Vec::new();
        let mut state = Statevector::zero(width)?;
        for (g, ins) in self.program.instructions().iter().enumerate() {
            if ins.slot.is_some() {
                prefixes.push((g, state.clone()));
            }
            state.apply_unchecked(&self.program.bind(ins, &self.params, &angles));
        }

        let n_gates = self.program.len();
        let per_gate: Vec<(Slot, Vec<f64>)> = prefixes
            .par_iter()
            .map(|(g, prefix)| -> Result<(Slot, Vec<f64>)> {
                let ins = &self.program.instructions()[*g];
                let base: Gate = self.program.bind(ins, &self.params, &angles);
                let theta = base.angle.unwrap_or(0.0);
                let mut d = vec![0.0; width];
                for (k, &(shift, coeff)) in shift_rule(ins.kind).iter().enumerate() {
                    let mut st = prefix.clone();
                    st.apply_unchecked(&Gate {
                        angle: Some(theta + shift),
                        ..base
                    });
                    self.program
                        .run_range(&mut st, g + 1..n_gates, &self.params, &angles);
                    let f = self.measure(&st, stream.child(1 + *g as u64).child(k as u64))?;
                    for (di, fi) in d.iter_mut().zip(f) {
                        *di += coeff * fi;
                    }
                }
                Ok((ins.slot.expect("parameterized"), d))
            })
            .collect::<Result<_>>()?;

        let mut d_params = vec![0.0; width * num_params];
        let mut d_inputs = vec![0.0; width * width];
        for (slot, d) in per_gate {
            match slot {
                Slot::Trainable(p) => {
                    for (out, v) in d.into_iter().enumerate() {
                        d_params[out * num_params + p] = v;
                    }
                }
                Slot::Input(k) => {
                    let chain = map_to_angle_derivative(input[k])?;
                    for (out, v) in d.into_iter().enumerate() {
                        d_inputs[out * width + k] = v * chain;
                    }
                }
            }
        }
        Ok(QnnGradients {
            width,
            num_params,
            d_params,
            d_inputs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qssl_oracles::dense::{self, DenseGate};
    use qssl_oracles::finite_diff::central_jacobian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact(width: usize, ansatz: AnsatzKind, layers: usize) -> QnnConfig {
        QnnConfig {
            width,
            ansatz,
            layers,
            mode: ExecutionMode::Exact,
        }
    }

    fn random_layer(cfg: QnnConfig, seed: u64) -> (QnnLayer, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = cfg.init_params(&mut rng);
        let input: Vec<f64> = (0..cfg.width).map(|_| rng.random_range(-2.0..2.0)).collect();
        (QnnLayer::new(cfg, params).unwrap(), input)
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("exact".parse::<ExecutionMode>().unwrap(), ExecutionMode::Exact);
        assert_eq!("shots:100".parse::<ExecutionMode>().unwrap(), ExecutionMode::Shots(100));
        assert!("shots:0".parse::<ExecutionMode>().is_err());
        assert!("shots".parse::<ExecutionMode>().is_err());
        assert_eq!(ExecutionMode::Shots(7).to_string(), "shots:7");
    }

    #[test]
    fn zero_ansatz_outputs_cosines() {
        let cfg = exact(4, AnsatzKind::Ring, 2);
        let layer = QnnLayer::new(cfg, vec![0.0; cfg.param_count()]).unwrap();
        let input = [-1.0, 0.0, 0.5, 3.0];
        let out = layer.forward(&input, SeedStream::root(0)).unwrap();
        for (o, v) in out.iter().zip(input) {
            assert!((o - map_to_angle(v).unwrap().cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_dense_oracle() {
        for (seed, ansatz) in [(1, AnsatzKind::Ring), (2, AnsatzKind::AllToAll)] {
            let (layer, input) = random_layer(exact(3, ansatz, 2), seed);
            let out = layer.forward(&input, SeedStream::root(0)).unwrap();
            let angles: Vec<f64> = input.iter().map(|&v| map_to_angle(v).unwrap()).collect();
            let gates: Vec<DenseGate> = layer
                .program()
                .instructions()
                .iter()
                .map(|ins| {
                    let theta = match ins.slot {
                        Some(Slot::Trainable(k)) => layer.params()[k],
                        Some(Slot::Input(k)) => angles[k],
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
            let psi = dense::simulate(&gates, 3);
            for q in 0..3 {
                let oracle = qssl_oracles::density::expectation_z(&psi, q);
                assert!((out[q] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shots_forward_is_seed_deterministic_and_bounded() {
        let mut cfg = exact(3, AnsatzKind::Ring, 1);
        cfg.mode = ExecutionMode::Shots(100);
        let (layer, input) = random_layer(cfg, 4);
        let a = layer.forward(&input, SeedStream::root(5)).unwrap();
        let b = layer.forward(&input, SeedStream::root(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn single_qubit_loader_gradient() {
        // d<Z>/dθ = -sin θ for RX(θ)|0>; at θ = π/2 (input 0) this is -1,
        // chained by dθ/dv = π/4.
        let p = build_data_loader(1).unwrap();
        let layer = QnnLayer {
            config: exact(1, AnsatzKind::Ring, 1),
            program: p,
            params: vec![],
        };
        let g = layer.gradients(&[0.0], SeedStream::root(0)).unwrap();
        assert!((g.d_input(0, 0) - (-1.0 * PI / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_ring_input_jacobian_is_diagonal() {
        let cfg = exact(3, AnsatzKind::Ring, 2);
        let layer = QnnLayer::new(cfg, vec![0.0; cfg.param_count()]).unwrap();
        let input = [0.4, -1.3, 2.2];
        let g = layer.gradients(&input, SeedStream::root(0)).unwrap();
        for out in 0..3 {
            for k in 0..3 {
                let expect = if out == k {
                    let s = 1.0 / (1.0 + (-input[k]).exp());
                    -map_to_angle(input[k]).unwrap().sin() * PI * s * (1.0 - s)
                } else {
                    0.0
                };
                assert!((g.d_input(out, k) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, ansatz, layers) in [
            (10, AnsatzKind::Ring, 1),
            (11, AnsatzKind::Ring, 2),
            (12, AnsatzKind::AllToAll, 2),
        ] {
            let cfg = exact(3, ansatz, layers);
            let (layer, input) = random_layer(cfg, seed);
            let g = layer.gradients(&input, SeedStream::root(0)).unwrap();

            let jp = central_jacobian(
                |p| {
                    QnnLayer::new(cfg, p.to_vec())
                        .unwrap()
                        .forward(&input, SeedStream::root(0))
                        .unwrap()
                },
                layer.params(),
                1e-5,
            );
            let ji = central_jacobian(
                |x| layer.forward(x, SeedStream::root(0)).unwrap(),
                &input,
                1e-5,
            );
            for out in 0..3 {
                for p in 0..cfg.param_count() {
                    assert!((g.d_param(out, p) - jp[out][p]).abs() < 1e-6);
                }
                for k in 0..3 {
                    assert!((g.d_input(out, k) - ji[out][k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn two_term_rule_is_inexact_for_crx() {
        // The four-term rule is needed: the two-term estimate deviates.
        let cfg = exact(2, AnsatzKind::Ring, 1);
        let (layer, input) = random_layer(cfg, 3);
        let crx_slot = 2; // RY, RY, CRX, CRX
        let eval = |theta: f64| {
            let mut p = layer.params().to_vec();
            p[crx_slot] = theta;
            QnnLayer::new(cfg, p)
                .unwrap()
                .forward(&input, SeedStream::root(0))
                .unwrap()
        };
        let t = layer.params()[crx_slot];
        let two_term: Vec<f64> = eval(t + FRAC_PI_2)
            .iter()
            .zip(eval(t - FRAC_PI_2))
            .map(|(a, b)| 0.5 * (a - b))
            .collect();
        let g = layer.gradients(&input, SeedStream::root(0)).unwrap();
        let gap = (0..2)
            .map(|o| (two_term[o] - g.d_param(o, crx_slot)).abs())
            .fold(0.0, f64::max);
        assert!(gap > 1e-4, "gap {gap}");
    }

    #[test]
    fn shot_gradients_are_unbiased() {
        let cfg = exact(2, AnsatzKind::Ring, 1);
        let (exact_layer, input) = random_layer(cfg, 21);
        let reference = exact_layer.gradients(&input, SeedStream::root(0)).unwrap();
        let shots_cfg = QnnConfig {
            mode: ExecutionMode::Shots(100),
            ..cfg
        };
        let layer = QnnLayer::new(shots_cfg, exact_layer.params().to_vec()).unwrap();
        let reps = 400;
        let mut mean = vec![0.0; 2 * cfg.param_count()];
        for r in 0..reps {
            let g = layer.gradients(&input, SeedStream::root(1000 + r)).unwrap();
            for out in 0..2 {
                for p in 0..cfg.param_count() {
                    mean[out * cfg.param_count() + p] += g.d_param(out, p) / reps as f64;
                }
            }
        }
        // Each shifted <Z> has variance <= 1/100; the widest recipe (four-term)
        // has Σc² < 0.26, so per-rep σ < 0.051.
        let bound = 5.0 * 0.051 / (reps as f64).sqrt();
        for out in 0..2 {
            for p in 0..cfg.param_count() {
                let m = mean[out * cfg.param_count() + p];
                assert!((m - reference.d_param(out, p)).abs() < bound);
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = exact(3, AnsatzKind::Ring, 1);
        assert!(QnnLayer::new(cfg, vec![0.0; 5]).is_err());
        let layer = QnnLayer::new(cfg, vec![0.0; 6]).unwrap();
        assert!(layer.forward(&[0.0; 2], SeedStream::root(0)).is_err());
        assert!(layer.forward(&[f64::NAN, 0.0, 0.0], SeedStream::root(0)).is_err());
    }
}

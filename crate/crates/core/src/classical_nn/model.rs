//! Model assembly: conv encoder -> compression -> representation network
//! -> projection head, plus the linear probe classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{avg_pool2, conv2d, flatten, leaky_relu, linear, quantum_layer};
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::qnn::{AnsatzKind, ExecutionMode, QnnConfig};
use crate::quantum_sim::Statevector;
use crate::rng::SeedStream;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    /// Two dense `W -> W` layers with bias, leaky-ReLU after each.
    Classical,
    Quantum,
}

impl std::str::FromStr for RepresentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(RepresentationKind::Classical),
            "quantum" => Ok(RepresentationKind::Quantum),
            _ => Err(Error::Config(format!(
                "unknown representation `{s}` (expected classical|quantum)"
            ))),
        }
    }
}

impl RepresentationKind {
    pub fn name(self) -> &'static str {
        match self {
            RepresentationKind::Classical => "classical",
            RepresentationKind::Quantum => "quantum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub in_channels: usize,
    /// Each stage: conv (padding `kernel / 2`) + leaky-ReLU + 2x2 average pool.
    pub conv_stages: Vec<ConvStage>,
    /// Width `F` of the dense layer after the conv stages.
    pub feature_dim: usize,
    /// Representation width `W` (qubit count in the quantum case).
    pub width: usize,
    pub representation: RepresentationKind,
    pub ansatz: AnsatzKind,
    pub qnn_layers: usize,
    pub mode: ExecutionMode,
    /// Output widths of the projection head layers; empty means no head.
    pub projection_widths: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            image_size: 32,
            in_channels: 3,
            conv_stages: vec![
                ConvStage { channels: 16, kernel: 3, stride: 1 },
                ConvStage { channels: 32, kernel: 3, stride: 1 },
                ConvStage { channels: 64, kernel: 3, stride: 1 },
            ],
            feature_dim: 512,
            width: 4,
            representation: RepresentationKind::Quantum,
            ansatz: AnsatzKind::Ring,
            qnn_layers: 2,
            mode: ExecutionMode::Exact,
            projection_widths: vec![4, 4],
        }
    }
}

impl EncoderConfig {
    pub fn qnn(&self) -> QnnConfig {
        QnnConfig {
            width: self.width,
            ansatz: self.ansatz,
            layers: self.qnn_layers,
            mode: self.mode,
        }
    }

    /// Spatial size after each stage, or an error if a stage collapses it.
    fn spatial_sizes(&self) -> Result<Vec<usize>> {
        let mut size = self.image_size;
        let mut out = Vec::new();
        for (i, s) in self.conv_stages.iter().enumerate() {
            if s.kernel == 0 || s.stride == 0 || s.channels == 0 {
                return Err(Error::Config(format!("conv stage {i} has a zero dimension")));
            }
            let pad = s.kernel / 2;
            if size + 2 * pad < s.kernel {
                return Err(Error::Config(format!("conv stage {i} kernel exceeds input")));
            }
            size = (size + 2 * pad - s.kernel) / s.stride + 1;
            size /= 2;
            if size == 0 {
                return Err(Error::Config(format!(
                    "conv stage {i} reduces the image to nothing"
                )));
            }
            out.push(size);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.in_channels == 0 || self.feature_dim == 0 {
            return Err(Error::Config("image size, channels and feature dim must be positive".into()));
        }
        if self.width == 0 {
            return Err(Error::Config("representation width must be positive".into()));
        }
        self.spatial_sizes()?;
        if let Some(w) = self.projection_widths.iter().find(|&&w| w == 0 || w > self.width) {
            return Err(Error::Config(format!(
                "projection width {w} must be in 1..={} (no wider than the representation)",
                self.width
            )));
        }
        if self.representation == RepresentationKind::Quantum {
            if self.width < 2 {
                return Err(Error::Config("quantum representation needs W >= 2".into()));
            }
            if self.qnn_layers == 0 {
                return Err(Error::Config("quantum representation needs >= 1 layer".into()));
            }
            if self.width > crate::quantum_sim::MAX_QUBITS {
                return Err(Error::Config(format!("W = {} exceeds simulator limit", self.width)));
            }
            if let ExecutionMode::Shots(0) = self.mode {
                return Err(Error::Config("shots must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Flattened conv output length feeding the feature layer.
    pub fn conv_output_len(&self) -> Result<usize> {
        let sizes = self.spatial_sizes()?;
        Ok(match (sizes.last(), self.conv_stages.last()) {
            (Some(s), Some(stage)) => s * s * stage.channels,
            _ => self.image_size * self.image_size * self.in_channels,
        })
    }

    pub fn representation_param_count(&self) -> usize {
        match self.representation {
            RepresentationKind::Classical => 2 * (self.width * self.width + self.width),
            RepresentationKind::Quantum => self.qnn().param_count(),
        }
    }

    /// Stable digest of the architecture, used to match checkpoints to runs.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        crate::sha256_hex(&json)
    }
}

pub type ParamId = super::tape::ParamId;

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.clone()))
            .collect()
    }

    /// SHA-256 over names, shapes and exact bit patterns.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        for (n, t) in self.names.iter().zip(&self.tensors) {
            bytes.extend_from_slice(n.as_bytes());
            bytes.push(0);
            for d in t.shape() {
                bytes.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        crate::sha256_hex(&bytes)
    }
}

fn he_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum RepLayout {
    Mlp(Vec<Dense>),
    Quantum(ParamId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    conv: Vec<Dense>,
    feature: Dense,
    compress: Dense,
    rep: RepLayout,
    head: Vec<Dense>,
}

/// Tape handles produced by one forward pass.
pub struct ForwardVars {
    pub features: Var,
    pub compressed: Var,
    /// Encoder output (representation-network output).
    pub y: Var,
    /// Projection-head output (equals `y` when there is no head).
    pub z: Var,
    /// Exact QNN states per row, quantum representation only.
    pub states: Option<Vec<Statevector>>,
}

/// The full contrastive model. All trainable tensors live in one
/// [`ParamSet`] in a fixed order, so the optimizer and checkpoints can treat
/// them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    config: EncoderConfig,
    params: ParamSet,
    layout: Layout,
}

impl HybridModel {
    /// He-uniform weights, zero biases, QNN angles uniform on `[-π, π]`.
    pub fn init(config: EncoderConfig, stream: SeedStream) -> Result<Self> {
        config.validate()?;
        let mut rng = stream.rng();
        let mut params = ParamSet::new();
        let dense = |params: &mut ParamSet, rng: &mut _, name: &str, out: usize, inp: usize| {
            Dense {
                w: params.push(format!("{name}.w"), he_uniform(rng, &[out, inp], inp)),
                b: params.push(format!("{name}.b"), Tensor::zeros(&[out])),
            }
        };

        let mut conv = Vec::new();
        let mut in_ch = config.in_channels;
        for (i, s) in config.conv_stages.iter().enumerate() {
            let fan_in = in_ch * s.kernel * s.kernel;
            conv.push(Dense {
                w: params.push(
                    format!("conv{i}.w"),
                    he_uniform(&mut rng, &[s.channels, in_ch, s.kernel, s.kernel], fan_in),
                ),
                b: params.push(format!("conv{i}.b"), Tensor::zeros(&[s.channels])),
            });
            in_ch = s.channels;
        }
        let flat = config.conv_output_len()?;
        let feature = dense(&mut params, &mut rng, "feature", config.feature_dim, flat);
        let compress = dense(&mut params, &mut rng, "compress", config.width, config.feature_dim);
        let rep = match config.representation {
            RepresentationKind::Classical => RepLayout::Mlp(vec![
                dense(&mut params, &mut rng, "rep0", config.width, config.width),
                dense(&mut params, &mut rng, "rep1", config.width, config.width),
            ]),
            RepresentationKind::Quantum => {
                let theta = config.qnn().init_params(&mut rng);
                RepLayout::Quantum(params.push("qnn.theta", Tensor::new(vec![theta.len()], theta)?))
            }
        };
        let mut head = Vec::new();
        let mut prev = config.width;
        for (i, &w) in config.projection_widths.iter().enumerate() {
            head.push(dense(&mut params, &mut rng, &format!("head{i}"), w, prev));
            prev = w;
        }
        Ok(HybridModel {
            config,
            params,
            layout: Layout {
                conv,
                feature,
                compress,
                rep,
                head,
            },
        })
    }

    /// Rebuilds a model around existing parameters; names and shapes must
    /// match what `config` would initialize.
    pub fn from_params(config: EncoderConfig, params: ParamSet) -> Result<Self> {
        let template = HybridModel::init(config, SeedStream::root(0))?;
        if template.params.names() != params.names() {
            return Err(Error::ConfigMismatch(
                "parameter names do not match the encoder configuration".into(),
            ));
        }
        for (i, (a, b)) in template.params.tensors().iter().zip(params.tensors()).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "parameter `{}` has shape {:?}, configuration expects {:?}",
                    params.names()[i],
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(HybridModel {
            params,
            ..template
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Parameters of the encoder only (everything before the projection head).
    pub fn encoder_param_ids(&self) -> Vec<ParamId> {
        let head: Vec<ParamId> = self.layout.head.iter().flat_map(|d| [d.w, d.b]).collect();
        (0..self.params.len()).filter(|i| !head.contains(i)).collect()
    }

    pub fn representation_param_count(&self) -> usize {
        match &self.layout.rep {
            RepLayout::Mlp(layers) => layers
                .iter()
                .map(|d| self.params.get(d.w).len() + self.params.get(d.b).len())
                .sum(),
            RepLayout::Quantum(id) => self.params.get(*id).len(),
        }
    }

    pub fn projection_param_count(&self) -> usize {
        self.layout
            .head
            .iter()
            .map(|d| self.params.get(d.w).len() + self.params.get(d.b).len())
            .sum()
    }

    /// Conv stages and the dense layer to `F` features.
    pub fn conv_features(&self, tape: &mut Tape, bound: &[Var], images: Var) -> Result<Var> {
        let shape = tape.value(images).shape().to_vec();
        let s = self.config.image_size;
        if shape.len() != 4 || shape[1] != self.config.in_channels || shape[2] != s || shape[3] != s {
            return Err(Error::Shape(format!(
                "encoder expects [B, {}, {s}, {s}], got {shape:?}",
                self.config.in_channels
            )));
        }
        let mut h = images;
        for (stage, d) in self.config.conv_stages.iter().zip(&self.layout.conv) {
            h = conv2d(tape, h, bound[d.w], bound[d.b], stage.stride)?;
            h = leaky_relu(tape, h, LEAKY_SLOPE)?;
            h = avg_pool2(tape, h)?;
        }
        let h = flatten(tape, h)?;
        let f = self.layout.feature;
        let h = linear(tape, h, bound[f.w], bound[f.b])?;
        leaky_relu(tape, h, LEAKY_SLOPE)
    }

    /// Compression to `W` followed by the representation network.
    pub fn represent(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        features: Var,
        stream: SeedStream,
    ) -> Result<(Var, Var, Option<Vec<Statevector>>)> {
        let c = self.layout.compress;
        let compressed = linear(tape, features, bound[c.w], bound[c.b])?;
        match &self.layout.rep {
            RepLayout::Mlp(layers) => {
                let y = mlp(tape, bound, compressed, layers, true)?;
                Ok((compressed, y, None))
            }
            RepLayout::Quantum(theta) => {
                let (y, states) =
                    quantum_layer(tape, compressed, bound[*theta], self.config.qnn(), stream)?;
                Ok((compressed, y, Some(states)))
            }
        }
    }

    pub fn project(&self, tape: &mut Tape, bound: &[Var], y: Var) -> Result<Var> {
        mlp(tape, bound, y, &self.layout.head, false)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        images: Var,
        stream: SeedStream,
    ) -> Result<ForwardVars> {
        let features = self.conv_features(tape, bound, images)?;
        let (compressed, y, states) = self.represent(tape, bound, features, stream)?;
        let z = self.project(tape, bound, y)?;
        Ok(ForwardVars {
            features,
            compressed,
            y,
            z,
            states,
        })
    }

    /// Inference-only encoder output `y` for a batch of images.
    pub fn encode(&self, images: &Tensor, stream: SeedStream) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(images.clone());
        let features = self.conv_features(&mut tape, &bound, x)?;
        let (_, y, _) = self.represent(&mut tape, &bound, features, stream)?;
        Ok(tape.value(y).clone())
    }
}

/// Dense layers with leaky-ReLU between them; after the last one only if
/// `activate_last`.
fn mlp(tape: &mut Tape, bound: &[Var], x: Var, layers: &[Dense], activate_last: bool) -> Result<Var> {
    let mut h = x;
    for (i, d) in layers.iter().enumerate() {
        h = linear(tape, h, bound[d.w], bound[d.b])?;
        if activate_last || i + 1 < layers.len() {
            h = leaky_relu(tape, h, LEAKY_SLOPE)?;
        }
    }
    Ok(h)
}

/// Single affine map `W -> C` trained with softmax cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearClassifier {
    pub fn zeros(width: usize, classes: usize) -> Self {
        LinearClassifier {
            weight: Tensor::zeros(&[classes, width]),
            bias: Tensor::zeros(&[classes]),
        }
    }

    pub fn init<R: Rng + ?Sized>(width: usize, classes: usize, rng: &mut R) -> Self {
        let bound = (1.0 / width as f64).sqrt();
        let data = (0..classes * width)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        LinearClassifier {
            weight: Tensor::new(vec![classes, width], data).expect("shape"),
            bias: Tensor::zeros(&[classes]),
        }
    }

    pub fn width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, tape: &mut Tape, w: Var, b: Var, y: Var) -> Result<Var> {
        linear(tape, y, w, b)
    }

    /// Logits `[B, C]` for features `[B, W]`.
    pub fn logits(&self, y: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let w = tape.constant(self.weight.clone());
        let b = tape.constant(self.bias.clone());
        let x = tape.constant(y.clone());
        let out = linear(&mut tape, x, w, b)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict(&self, y: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(y)?;
        let c = self.classes();
        Ok(logits
            .data()
            .chunks(c)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }
}

//! Linear evaluation on a frozen encoder.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classical_nn::ops::{linear, softmax_cross_entropy};
use crate::classical_nn::{adam_step, AdamConfig, AdamState, HybridModel, LinearClassifier, Tape, Tensor};
use crate::data_io::{ChannelStats, Dataset};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Images encoded per forward pass when extracting features.
const ENCODE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    /// Small by default: with the contrastive learning rate, large probe
    /// batches leave the classifier far from converged after 100 epochs.
    pub batch_size: usize,
    pub optimizer: AdamConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 100,
            batch_size: 8,
            optimizer: AdamConfig::default(),
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("probe batch size must be positive".into()));
        }
        self.optimizer.validate()
    }
}

/// Encoder outputs `y` (`[M, W]`) for every image of `dataset`, in order.
/// Chunk `k` draws shots from `stream/k`.
pub fn extract_features(
    model: &HybridModel,
    dataset: &Dataset,
    stats: &ChannelStats,
    stream: SeedStream,
) -> Result<Tensor> {
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let mut rows = Vec::with_capacity(dataset.len() * model.config().width);
    for (k, chunk) in idx.chunks(ENCODE_CHUNK).enumerate() {
        let x = stats.normalize(&dataset.batch(chunk))?;
        rows.extend(model.encode(&x, stream.child(k as u64))?.into_data());
    }
    Tensor::new(vec![dataset.len(), model.config().width], rows)
}

/// Trains a softmax linear classifier on fixed features.
pub fn train_linear_probe(
    features: &Tensor,
    labels: &[usize],
    num_classes: usize,
    config: &ProbeConfig,
    stream: SeedStream,
) -> Result<LinearClassifier> {
    config.validate()?;
    let [m, width]: [usize; 2] = features
        .shape()
        .try_into()
        .map_err(|_| Error::Shape("probe features must be [M, W]".into()))?;
    if m == 0 || labels.len() != m {
        return Err(Error::Dataset(format!(
            "probe needs labeled images ({m} feature rows, {} labels)",
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {l} outside [0, {num_classes})")));
    }
    let mut clf = LinearClassifier::zeros(width, num_classes);
    let mut params = vec![clf.weight.clone(), clf.bias.clone()];
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..m).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut stream.child(epoch as u64).rng());
        for chunk in order.chunks(config.batch_size) {
            let mut x = Vec::with_capacity(chunk.len() * width);
            for &i in chunk {
                x.extend_from_slice(features.row(i));
            }
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let w = tape.param(0, params[0].clone());
            let b = tape.param(1, params[1].clone());
            let xv = tape.constant(Tensor::new(vec![chunk.len(), width], x)?);
            let logits = linear(&mut tape, xv, w, b)?;
            let loss = softmax_cross_entropy(&mut tape, logits, &y)?;
            let g = tape.backward(loss)?;
            let grads = vec![
                g.param(0).expect("bound").clone(),
                g.param(1).expect("bound").clone(),
            ];
            adam_step(&mut params, &grads, &mut state, &config.optimizer)?;
        }
    }
    clf.weight = params[0].clone();
    clf.bias = params[1].clone();
    Ok(clf)
}

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::InvalidArgument(format!(
                "label pair ({truth}, {predicted}) outside [0, {})",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Fraction of class `c` predicted as `c`; `None` if the class is absent.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let n = self.row_sum(c);
        (n > 0).then(|| self.get(c, c) as f64 / n as f64)
    }

    /// Tab-separated table with a header row of class names.
    pub fn to_tsv(&self, names: &[&str]) -> String {
        let name = |i: usize| names.get(i).copied().unwrap_or("?").to_string();
        let mut s = String::from("true\\predicted");
        for p in 0..self.classes {
            s.push('\t');
            s.push_str(&name(p));
        }
        s.push('\n');
        for t in 0..self.classes {
            s.push_str(&name(t));
            for p in 0..self.classes {
                s.push('\t');
                s.push_str(&self.get(t, p).to_string());
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(classifier: &LinearClassifier, features: &Tensor, labels: &[usize]) -> Result<Evaluation> {
    if labels.is_empty() {
        return Err(Error::Dataset("no images to evaluate".into()));
    }
    if features.shape().first() != Some(&labels.len()) {
        return Err(Error::Shape(format!(
            "{:?} features for {} labels",
            features.shape(),
            labels.len()
        )));
    }
    let predicted = classifier.predict(features)?;
    let mut confusion = ConfusionMatrix::new(classifier.classes());
    for (&t, &p) in labels.iter().zip(&predicted) {
        confusion.record(t, p)?;
    }
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub classifier: LinearClassifier,
    pub train_accuracy: f64,
    pub encoder_hash_before: String,
    pub encoder_hash_after: String,
}

/// Extracts features with the frozen encoder, trains the probe and reports
/// the encoder hash on both sides of training.
pub fn probe_train(
    model: &HybridModel,
    train: &Dataset,
    stats: &ChannelStats,
    config: &ProbeConfig,
    stream: SeedStream,
) -> Result<ProbeOutcome> {
    let before = model.params().content_hash();
    let features = extract_features(model, train, stats, stream.child(0))?;
    let classifier =
        train_linear_probe(&features, train.labels(), train.num_classes(), config, stream.child(1))?;
    let train_accuracy = evaluate(&classifier, &features, train.labels())?.accuracy;
    Ok(ProbeOutcome {
        classifier,
        train_accuracy,
        encoder_hash_before: before,
        encoder_hash_after: model.params().content_hash(),
    })
}

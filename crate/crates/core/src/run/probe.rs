//! Linear probing of checkpoints and test-set evaluation.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::train::{load_training_checkpoint, training_data};
use crate::classical_nn::{EncoderConfig, LinearClassifier};
use crate::data_io::{
    export_metrics, first_classes, load_cifar10, Checkpoint, MetricsRecord, Split, CLASS_NAMES,
};
use crate::error::{Error, Result};
use crate::metrics_probe::{evaluate, extract_features, probe_train, Evaluation};
use crate::rng::{domain, SeedStream};

pub const PROBE_METRICS_FILE: &str = "probe.tsv";
pub const PROBE_DIR: &str = "probes";
pub const CONFUSION_FILE: &str = "confusion.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProbeMeta {
    probe_of_batch: u64,
    seed: u64,
    classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub checkpoint: PathBuf,
    pub batch: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub encoder_hash_before: String,
    pub encoder_hash_after: String,
    pub probe_path: PathBuf,
}

fn save_probe(path: &Path, encoder: &EncoderConfig, clf: &LinearClassifier, meta: &ProbeMeta) -> Result<()> {
    Checkpoint {
        encoder: encoder.clone(),
        meta: serde_json::to_value(meta).expect("meta serializes"),
        arrays: vec![
            ("probe/weight".into(), clf.weight.clone()),
            ("probe/bias".into(), clf.bias.clone()),
        ],
    }
    .save(path)
}

fn load_probe(path: &Path, encoder: &EncoderConfig) -> Result<LinearClassifier> {
    let c = Checkpoint::load(path)?;
    c.check_encoder(encoder)?;
    let weight = c.require("probe/weight")?.clone();
    let bias = c.require("probe/bias")?.clone();
    if weight.shape().len() != 2 || weight.shape()[1] != encoder.width || bias.shape() != [weight.shape()[0]] {
        return Err(Error::Format("probe arrays have inconsistent shapes".into()));
    }
    Ok(LinearClassifier { weight, bias })
}

/// Trains a probe on each checkpoint's frozen encoder (training subset) and
/// scores it on the filtered test split. Writes one probe file per
/// checkpoint and `probe.tsv` with the accuracy-vs-batch series.
pub fn cmd_probe(config: &RunConfig, checkpoints: &[PathBuf]) -> Result<Vec<ProbeReport>> {
    config.validate()?;
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("no checkpoints to probe".into()));
    }
    let classes = first_classes(config.classes);
    let (train, _) = training_data(config)?;
    let test = load_cifar10(&config.dataset, &classes, Split::Test)?;
    let probe_dir = config.out.join(PROBE_DIR);
    std::fs::create_dir_all(&probe_dir).map_err(|e| Error::io(&probe_dir, e))?;
    let stream = SeedStream::root(config.seed).child(domain::PROBE);

    let mut reports = Vec::new();
    for path in checkpoints {
        let loaded = load_training_checkpoint(path, &config.encoder)?;
        if loaded.meta.classes != classes {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint trained on classes {:?}, run uses {classes:?}",
                loaded.meta.classes
            )));
        }
        let stats = loaded.meta.stats;
        let outcome = probe_train(&loaded.model, &train, &stats, &config.probe, stream.child(0))?;
        if outcome.encoder_hash_before != outcome.encoder_hash_after {
            return Err(Error::NonFinite("encoder parameters changed during probing".into()));
        }
        let test_features = extract_features(&loaded.model, &test, &stats, stream.child(1))?;
        let test_eval = evaluate(&outcome.classifier, &test_features, test.labels())?;
        let probe_path = probe_dir.join(format!("batch_{:06}.probe", loaded.meta.batch));
        save_probe(
            &probe_path,
            &config.encoder,
            &outcome.classifier,
            &ProbeMeta {
                probe_of_batch: loaded.meta.batch,
                seed: config.seed,
                classes: classes.clone(),
            },
        )?;
        reports.push(ProbeReport {
            checkpoint: path.clone(),
            batch: loaded.meta.batch,
            train_accuracy: outcome.train_accuracy,
            test_accuracy: test_eval.accuracy,
            encoder_hash_before: outcome.encoder_hash_before,
            encoder_hash_after: outcome.encoder_hash_after,
            probe_path,
        });
    }
    let mut rows: Vec<MetricsRecord> = reports
        .iter()
        .map(|r| MetricsRecord {
            batch: r.batch,
            probe_accuracy: Some(r.test_accuracy),
            ..MetricsRecord::default()
        })
        .collect();
    rows.sort_by_key(|r| r.batch);
    export_metrics(&rows, &config.out.join(PROBE_METRICS_FILE))?;
    Ok(reports)
}

/// Classifies `n` test images drawn with `seed` and writes the confusion
/// matrix.
pub fn cmd_eval(
    config: &RunConfig,
    checkpoint: &Path,
    probe: &Path,
    n: usize,
    seed: u64,
) -> Result<Evaluation> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("eval needs at least one image (n = 0)".into()));
    }
    let classes = first_classes(config.classes);
    let test = load_cifar10(&config.dataset, &classes, Split::Test)?;
    if n > test.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} images but the filtered test split has {}",
            test.len()
        )));
    }
    let loaded = load_training_checkpoint(checkpoint, &config.encoder)?;
    let clf = load_probe(probe, &config.encoder)?;
    if clf.classes() != classes.len() {
        return Err(Error::ConfigMismatch(format!(
            "probe has {} classes, run uses {}",
            clf.classes(),
            classes.len()
        )));
    }
    let stream = SeedStream::root(seed).child(domain::EVAL);
    let mut idx = sample(&mut stream.child(0).rng(), test.len(), n).into_vec();
    idx.sort_unstable();
    let subset = test.select(&idx);
    let features = extract_features(&loaded.model, &subset, &loaded.meta.stats, stream.child(1))?;
    let ev = evaluate(&clf, &features, subset.labels())?;
    std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let path = config.out.join(CONFUSION_FILE);
    let names: Vec<&str> = classes.iter().map(|&c| CLASS_NAMES[c]).collect();
    std::fs::write(&path, ev.confusion.to_tsv(&names)).map_err(|e| Error::io(&path, e))?;
    Ok(ev)
}

//! Self-supervised training runs with checkpointing and resume.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::classical_nn::{AdamState, HybridModel, ParamSet, Tensor};
use crate::contrastive::{StepRecord, StepStreams, Trainer};
use crate::data_io::{
    export_metrics, first_classes, load_cifar10, ChannelStats, Checkpoint, Dataset, MetricsRecord,
    Split,
};
use crate::error::{Error, Result};
use crate::rng::{domain, SeedStream};

pub const METRICS_FILE: &str = "metrics.tsv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Header metadata of a training checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub batch: u64,
    pub seed: u64,
    pub adam_step: u64,
    pub stats: ChannelStats,
    pub classes: Vec<usize>,
}

/// Training data for `config`: the seeded subset of the filtered train
/// split, plus normalization statistics computed from it.
pub fn training_data(config: &RunConfig) -> Result<(Dataset, ChannelStats)> {
    let full = load_cifar10(&config.dataset, &first_classes(config.classes), Split::Train)?;
    let data = if config.train_images == 0 {
        full
    } else {
        full.subset(config.train_images, SeedStream::root(config.seed).child(domain::DATA))?
    };
    if data.len() < config.train.batch_size {
        return Err(Error::Dataset(format!(
            "{} training images cannot fill a batch of {}",
            data.len(),
            config.train.batch_size
        )));
    }
    let stats = ChannelStats::from_dataset(&data)?;
    Ok((data, stats))
}

/// Image indices for batch `b` (0-based); a function of `(seed, b)` only.
pub fn batch_indices(seed: u64, b: u64, dataset_len: usize, batch_size: usize) -> Vec<usize> {
    let mut rng = SeedStream::root(seed).path(&[domain::BATCH, b]).rng();
    sample(&mut rng, dataset_len, batch_size).into_vec()
}

pub fn step_streams(seed: u64, b: u64) -> StepStreams {
    let root = SeedStream::root(seed);
    StepStreams {
        augment: root.path(&[domain::AUGMENT, b]),
        shots: root.path(&[domain::SHOTS, b]),
    }
}

pub fn checkpoint_path(out: &Path, batch: u64) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("batch_{batch:06}.ckpt"))
}

fn metrics_to_tensor(records: &[MetricsRecord]) -> Tensor {
    let data = records
        .iter()
        .flat_map(|r| [r.batch as f64, r.loss.unwrap_or(f64::NAN), r.mean_hs.unwrap_or(f64::NAN)])
        .collect();
    Tensor::new(vec![records.len(), 3], data).expect("shape")
}

fn metrics_from_tensor(t: &Tensor) -> Result<Vec<MetricsRecord>> {
    if t.shape().len() != 2 || t.shape()[1] != 3 {
        return Err(Error::Format("metrics history must be [k, 3]".into()));
    }
    let opt = |v: f64| (!v.is_nan()).then_some(v);
    Ok(t.data()
        .chunks(3)
        .map(|r| MetricsRecord {
            batch: r[0] as u64,
            loss: opt(r[1]),
            mean_hs: opt(r[2]),
            probe_accuracy: None,
        })
        .collect())
}

/// Everything needed to continue training bit-exactly.
pub fn training_checkpoint(
    trainer: &Trainer,
    seed: u64,
    classes: &[usize],
    history: &[MetricsRecord],
) -> Checkpoint {
    let params = trainer.model().params();
    let opt = trainer.optimizer();
    let mut arrays = Vec::new();
    for (name, t) in params.names().iter().zip(params.tensors()) {
        arrays.push((format!("param/{name}"), t.clone()));
    }
    for (name, t) in params.names().iter().zip(&opt.m) {
        arrays.push((format!("adam_m/{name}"), t.clone()));
    }
    for (name, t) in params.names().iter().zip(&opt.v) {
        arrays.push((format!("adam_v/{name}"), t.clone()));
    }
    arrays.push(("metrics".into(), metrics_to_tensor(history)));
    let meta = TrainingMeta {
        batch: trainer.batches_done(),
        seed,
        adam_step: opt.step,
        stats: *trainer.stats(),
        classes: classes.to_vec(),
    };
    Checkpoint {
        encoder: trainer.model().config().clone(),
        meta: serde_json::to_value(meta).expect("meta serializes"),
        arrays,
    }
}

/// A checkpoint unpacked into model, optimizer state and history.
pub struct LoadedTraining {
    pub model: HybridModel,
    pub optimizer: AdamState,
    pub meta: TrainingMeta,
    pub history: Vec<MetricsRecord>,
}

pub fn load_training_checkpoint(path: &Path, expected: &crate::classical_nn::EncoderConfig) -> Result<LoadedTraining> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.check_encoder(expected)?;
    let meta: TrainingMeta = serde_json::from_value(ckpt.meta.clone())
        .map_err(|e| Error::Format(format!("not a training checkpoint: {e}")))?;
    let template = HybridModel::init(expected.clone(), SeedStream::root(0))?;
    let names = template.params().names().to_vec();
    let mut params = ParamSet::new();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for name in &names {
        params.push(name.clone(), ckpt.require(&format!("param/{name}"))?.clone());
        m.push(ckpt.require(&format!("adam_m/{name}"))?.clone());
        v.push(ckpt.require(&format!("adam_v/{name}"))?.clone());
    }
    let model = HybridModel::from_params(expected.clone(), params)?;
    let history = metrics_from_tensor(ckpt.require("metrics")?)?;
    Ok(LoadedTraining {
        model,
        optimizer: AdamState {
            step: meta.adam_step,
            m,
            v,
        },
        meta,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Contrastive training for `config.train.batches` batches, optionally
/// continuing from a checkpoint. Writes the effective config, the metrics
/// table and checkpoints under `config.out`. `on_step` sees each batch.
pub fn cmd_train_ssl(
    config: &RunConfig,
    resume: Option<&Path>,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    create_dir(&config.out.join(CHECKPOINT_DIR))?;
    let config_path = config.out.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    let classes = first_classes(config.classes);
    let (data, fresh_stats) = training_data(config)?;
    let (mut trainer, mut history) = match resume {
        None => {
            let model = HybridModel::init(
                config.encoder.clone(),
                SeedStream::root(config.seed).child(domain::INIT),
            )?;
            let t = Trainer::new(model, config.train.clone(), config.augment.clone(), fresh_stats)?;
            (t, Vec::new())
        }
        Some(path) => {
            let loaded = load_training_checkpoint(path, &config.encoder)?;
            if loaded.meta.seed != config.seed || loaded.meta.classes != classes {
                return Err(Error::ConfigMismatch(format!(
                    "checkpoint was trained with seed {} on classes {:?}",
                    loaded.meta.seed, loaded.meta.classes
                )));
            }
            let t = Trainer::resume(
                loaded.model,
                loaded.optimizer,
                loaded.meta.batch,
                config.train.clone(),
                config.augment.clone(),
                loaded.meta.stats,
            )?;
            (t, loaded.history)
        }
    };
    let target = config.train.batches as u64;
    if trainer.batches_done() > target {
        return Err(Error::Config(format!(
            "checkpoint is at batch {} but the run stops at {target}",
            trainer.batches_done()
        )));
    }

    let mut checkpoints = Vec::new();
    let mut save = |trainer: &Trainer, history: &[MetricsRecord]| -> Result<PathBuf> {
        let path = checkpoint_path(&config.out, trainer.batches_done());
        training_checkpoint(trainer, config.seed, &classes, history).save(&path)?;
        checkpoints.push(path.clone());
        Ok(path)
    };
    let mut last = if resume.is_none() {
        Some(save(&trainer, &history)?)
    } else {
        None
    };

    while trainer.batches_done() < target {
        let b = trainer.batches_done();
        let idx = batch_indices(config.seed, b, data.len(), config.train.batch_size);
        let rec = trainer.train_step(&data.batch(&idx), step_streams(config.seed, b))?;
        on_step(&rec);
        history.push(MetricsRecord {
            batch: rec.batch,
            loss: Some(rec.loss),
            mean_hs: rec.mean_hs,
            probe_accuracy: None,
        });
        let done = trainer.batches_done();
        if done == target || (config.checkpoint_every > 0 && done % config.checkpoint_every as u64 == 0) {
            last = Some(save(&trainer, &history)?);
        }
    }
    let final_checkpoint = match last {
        Some(p) => p,
        None => save(&trainer, &history)?,
    };

    let metrics_path = config.out.join(METRICS_FILE);
    export_metrics(&history, &metrics_path)?;
    Ok(TrainOutcome {
        records: history,
        checkpoints,
        final_checkpoint,
        metrics_path,
    })
}

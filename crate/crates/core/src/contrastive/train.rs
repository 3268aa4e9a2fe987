//! One optimizer step of contrastive training.

use serde::{Deserialize, Serialize};

use super::augment::AugmentConfig;
use super::loss::nt_xent_loss;
use super::views::make_view_batch;
use crate::classical_nn::{adam_step, AdamConfig, AdamState, HybridModel, Tape, Tensor};
use crate::data_io::ChannelStats;
use crate::error::{Error, Result};
use crate::metrics_probe::hs_distance;
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Images per batch `N`; each contributes two views.
    pub batch_size: usize,
    pub temperature: f64,
    pub batches: usize,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            temperature: 0.07,
            batches: 176,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 (no negatives otherwise)".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        self.optimizer.validate()
    }
}

/// Randomness for one step: augmentation and shot sampling.
#[derive(Debug, Clone, Copy)]
pub struct StepStreams {
    pub augment: SeedStream,
    pub shots: SeedStream,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Number of batches completed, counting this one.
    pub batch: u64,
    pub loss: f64,
    /// Mean Hilbert-Schmidt distance, quantum representation only.
    pub mean_hs: Option<f64>,
}

pub struct Trainer {
    model: HybridModel,
    optimizer: AdamState,
    config: TrainConfig,
    augment: AugmentConfig,
    stats: ChannelStats,
    batches_done: u64,
}

impl Trainer {
    pub fn new(model: HybridModel, config: TrainConfig, augment: AugmentConfig, stats: ChannelStats) -> Result<Self> {
        let optimizer = AdamState::new(model.params().tensors());
        Self::resume(model, optimizer, 0, config, augment, stats)
    }

    pub fn resume(
        model: HybridModel,
        optimizer: AdamState,
        batches_done: u64,
        config: TrainConfig,
        augment: AugmentConfig,
        stats: ChannelStats,
    ) -> Result<Self> {
        config.validate()?;
        augment.validate()?;
        let params = model.params().tensors();
        let matches = optimizer.m.len() == params.len()
            && optimizer.v.len() == params.len()
            && params
                .iter()
                .zip(optimizer.m.iter().zip(&optimizer.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
        if !matches {
            return Err(Error::ConfigMismatch("optimizer state does not match the model".into()));
        }
        Ok(Trainer {
            model,
            optimizer,
            config,
            augment,
            stats,
            batches_done,
        })
    }

    pub fn model(&self) -> &HybridModel {
        &self.model
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn batches_done(&self) -> u64 {
        self.batches_done
    }

    pub fn into_parts(self) -> (HybridModel, AdamState) {
        (self.model, self.optimizer)
    }

    /// Augments `images` (`[N, 3, S, S]`, values in `[0, 1]`) into `2N`
    /// views, runs the full hybrid forward and backward pass and applies one
    /// optimizer step. The recorded loss is the pre-update value.
    pub fn train_step(&mut self, images: &Tensor, streams: StepStreams) -> Result<StepRecord> {
        let batch = make_view_batch(images, &self.augment, streams.augment)?;
        let x = self.stats.normalize(&batch.views)?;

        let mut tape = Tape::new();
        let bound = self.model.params().bind(&mut tape);
        let xv = tape.constant(x);
        let out = self.model.forward(&mut tape, &bound, xv, streams.shots)?;
        let loss = nt_xent_loss(&mut tape, out.z, &batch.pair_index, self.config.temperature)?;
        let loss_value = tape.value(loss).data()[0];
        let mean_hs = out
            .states
            .as_deref()
            .map(|s| hs_distance(s, &batch.pair_index).map(|r| r.mean))
            .transpose()?;

        let grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = self
            .model
            .params()
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, p)| grads.param(i).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of `{}` at batch {}",
                self.model.params().names()[i],
                self.batches_done + 1
            )));
        }
        adam_step(
            self.model.params_mut().tensors_mut(),
            &grads,
            &mut self.optimizer,
            &self.config.optimizer,
        )?;
        self.batches_done += 1;
        Ok(StepRecord {
            batch: self.batches_done,
            loss: loss_value,
            mean_hs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_nn::{ConvStage, EncoderConfig, RepresentationKind};
    use crate::qnn::{AnsatzKind, ExecutionMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(representation: RepresentationKind) -> HybridModel {
        let cfg = EncoderConfig {
            image_size: 8,
            in_channels: 3,
            conv_stages: vec![ConvStage { channels: 4, kernel: 3, stride: 1 }],
            feature_dim: 16,
            width: 3,
            representation,
            ansatz: AnsatzKind::Ring,
            qnn_layers: 1,
            mode: ExecutionMode::Exact,
            projection_widths: vec![3, 3],
        };
        HybridModel::init(cfg, SeedStream::root(1)).unwrap()
    }

    fn images(n: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Tensor::new(vec![n, 3, 8, 8], (0..n * 192).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn streams(b: u64) -> StepStreams {
        StepStreams {
            augment: SeedStream::root(7).child(b),
            shots: SeedStream::root(8).child(b),
        }
    }

    fn config(lr: f64) -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            batches: 1,
            optimizer: AdamConfig { lr, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_and_decay_leave_parameters() {
        let model = small(RepresentationKind::Quantum);
        let before = model.params().content_hash();
        let mut cfg = config(0.0);
        cfg.optimizer.weight_decay = 0.0;
        let mut t = Trainer::new(model, cfg, AugmentConfig::default(), ChannelStats::identity()).unwrap();
        let rec = t.train_step(&images(4), streams(0)).unwrap();
        assert_eq!(rec.batch, 1);
        assert!(rec.loss > 0.0);
        assert!(rec.mean_hs.is_some_and(|h| (0.0..=2.0).contains(&h)));
        assert_eq!(t.model().params().content_hash(), before);
    }

    #[test]
    fn classical_steps_reduce_loss_on_fixed_batch() {
        let mut t = Trainer::new(
            small(RepresentationKind::Classical),
            config(1e-2),
            AugmentConfig::identity(),
            ChannelStats::identity(),
        )
        .unwrap();
        let imgs = images(4);
        let first = t.train_step(&imgs, streams(0)).unwrap();
        assert!(first.mean_hs.is_none());
        let mut last = first;
        for b in 1..30 {
            last = t.train_step(&imgs, streams(b)).unwrap();
        }
        assert!(last.loss < first.loss, "{} -> {}", first.loss, last.loss);
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut t = Trainer::new(
                small(RepresentationKind::Quantum),
                config(1e-3),
                AugmentConfig::default(),
                ChannelStats::identity(),
            )
            .unwrap();
            let a = t.train_step(&images(4), streams(0)).unwrap();
            let b = t.train_step(&images(4), streams(1)).unwrap();
            (a, b, t.model().params().content_hash())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_config_and_state() {
        assert!(TrainConfig { batch_size: 1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { temperature: 0.0, ..TrainConfig::default() }.validate().is_err());
        let model = small(RepresentationKind::Classical);
        let wrong = AdamState::new(&[Tensor::zeros(&[1])]);
        assert!(Trainer::resume(model, wrong, 0, config(1e-3), AugmentConfig::default(), ChannelStats::identity()).is_err());
    }
}

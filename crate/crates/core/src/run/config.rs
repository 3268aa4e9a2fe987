//! Run configuration: one TOML file layered over a named profile, then
//! command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical_nn::{AdamConfig, EncoderConfig, RepresentationKind};
use crate::contrastive::{AugmentConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics_probe::ProbeConfig;
use crate::qnn::{AnsatzKind, ExecutionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 2 classes, 512 images, W=4, batch 32, 50 batches.
    Desk,
    /// 5 classes, full split, W=8, batch 256, 176 batches.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile `{s}` (expected desk|paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory holding the CIFAR-10 binary files.
    pub dataset: PathBuf,
    pub out: PathBuf,
    /// Train on the first `classes` CIFAR-10 classes.
    pub classes: usize,
    /// Seeded subset of the filtered training split; 0 keeps all of it.
    pub train_images: usize,
    /// Checkpoint every this many batches (0: only initial and final).
    pub checkpoint_every: usize,
    /// Test images sampled by `eval`.
    pub eval_images: usize,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::profile(Profile::Desk)
    }
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let (classes, train_images, width, batch_size, batches, every, lr) = match profile {
            Profile::Desk => (2, 512, 4, 32, 50, 25, 3e-4),
            Profile::Paper => (5, 0, 8, 256, 176, 16, 1e-3),
        };
        RunConfig {
            seed: 0,
            dataset: PathBuf::from("data/cifar-10-batches-bin"),
            out: PathBuf::from("runs/default"),
            classes,
            train_images,
            checkpoint_every: every,
            eval_images: 900,
            encoder: EncoderConfig {
                width,
                projection_widths: vec![width, width],
                ..EncoderConfig::default()
            },
            train: TrainConfig {
                batch_size,
                batches,
                optimizer: AdamConfig {
                    lr,
                    ..AdamConfig::default()
                },
                ..TrainConfig::default()
            },
            augment: AugmentConfig::default(),
            probe: ProbeConfig::default(),
        }
    }

    /// Parses TOML. An optional top-level `profile = "desk" | "paper"`
    /// selects the base; every other key overrides it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML: {e}")))?;
        let profile = match table.remove("profile") {
            None => Profile::Desk,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(v) => return Err(Error::Config(format!("profile must be a string, got {v}"))),
        };
        let base = toml::Table::try_from(RunConfig::profile(profile))
            .map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge(base, table);
        let config: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("TOML: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The complete effective configuration; parsing it reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > crate::data_io::cifar::NUM_CLASSES {
            return Err(Error::Config(format!("classes must be in 2..=10, got {}", self.classes)));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        if self.encoder.image_size != crate::data_io::cifar::IMAGE_SIZE
            || self.encoder.in_channels != crate::data_io::cifar::CHANNELS
        {
            return Err(Error::Config("encoder input must be 3x32x32 for CIFAR-10".into()));
        }
        self.encoder.validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        self.probe.validate()?;
        if self.train_images != 0 && self.train_images < self.train.batch_size {
            return Err(Error::Config(format!(
                "{} training images cannot fill a batch of {}",
                self.train_images, self.train.batch_size
            )));
        }
        Ok(())
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// Command-line overrides; `None` leaves the file/profile value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: Option<ExecutionMode>,
    pub representation: Option<RepresentationKind>,
    pub ansatz: Option<AnsatzKind>,
    pub width: Option<usize>,
    pub layers: Option<usize>,
    pub batches: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(d) = &self.dataset {
            config.dataset = d.clone();
        }
        if let Some(o) = &self.out {
            config.out = o.clone();
        }
        if let Some(m) = self.mode {
            config.encoder.mode = m;
        }
        if let Some(r) = self.representation {
            config.encoder.representation = r;
        }
        if let Some(a) = self.ansatz {
            config.encoder.ansatz = a;
        }
        if let Some(w) = self.width {
            set_width(config, w);
        }
        if let Some(l) = self.layers {
            config.encoder.qnn_layers = l;
        }
        if let Some(b) = self.batches {
            config.train.batches = b;
        }
        config.validate()
    }
}

/// Sets `W` and resizes the projection head to `W` wide.
pub fn set_width(config: &mut RunConfig, width: usize) {
    config.encoder.width = width;
    for w in &mut config.encoder.projection_widths {
        *w = width;
    }
}

//! CIFAR-10 binary-version reader.
//!
//! Each file is a sequence of 3073-byte records: one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes, each plane row-major. The
//! training split is `data_batch_1.bin` .. `data_batch_5.bin`, the test split
//! `test_batch.bin`.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classical_nn::Tensor;
use crate::error::{Error, Result};

use crate::rng::SeedStream;

pub const IMAGE_SIZE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = CHANNELS * IMAGE_SIZE * IMAGE_SIZE;
pub const RECORD_LEN: usize = 1 + PIXELS;
pub const NUM_CLASSES: usize = 10;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn files(self) -> &'static [&'static str] {
        match self {
            Split::Train => &TRAIN_FILES,
            Split::Test => std::slice::from_ref(&TEST_FILE),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labeled images kept as raw bytes; pixel values are `byte / 255`.
///
/// Labels are positions in `classes` (so the first `k` classes keep their
/// CIFAR ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<usize>,
    classes: Vec<usize>,
    split: Split,
}

impl Dataset {
    /// Builds a dataset from raw records already filtered to `classes`.
    pub fn from_raw(pixels: Vec<u8>, labels: Vec<usize>, classes: Vec<usize>, split: Split) -> Result<Self> {
        if pixels.len() != labels.len() * PIXELS {
            return Err(Error::Dataset(format!(
                "{} pixel bytes for {} images",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Dataset(format!("label {l} outside the class filter")));
        }
        Ok(Dataset {
            pixels,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Original CIFAR class ids, in label order.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn raw_image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Image `i` as `[3, 32, 32]` values in `[0, 1]`.
    pub fn image(&self, i: usize) -> Tensor {
        let data = self.raw_image(i).iter().map(|&b| b as f64 / 255.0).collect();
        Tensor::new(vec![CHANNELS, IMAGE_SIZE, IMAGE_SIZE], data).expect("fixed shape")
    }

    /// Stacked images `[n, 3, 32, 32]` in `[0, 1]`.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            data.extend(self.raw_image(i).iter().map(|&b| b as f64 / 255.0));
        }
        Tensor::new(vec![indices.len(), CHANNELS, IMAGE_SIZE, IMAGE_SIZE], data)
            .expect("fixed shape")
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut pixels = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            pixels.extend_from_slice(self.raw_image(i));
        }
        Dataset {
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
            split: self.split,
        }
    }

    /// A seeded random subset of `n` images, kept in file order.
    pub fn subset(&self, n: usize, stream: SeedStream) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::Dataset(format!(
                "requested {n} images but the {} split has {}",
                self.split,
                self.len()
            )));
        }
        if n == self.len() {
            return Ok(self.clone());
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream.rng());
        idx.truncate(n);
        idx.sort_unstable();
        Ok(self.select(&idx))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// SHA-256 over labels and pixels.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.pixels.len() + self.labels.len());
        bytes.extend(self.labels.iter().map(|&l| l as u8));
        bytes.extend_from_slice(&self.pixels);
        crate::sha256_hex(&bytes)
    }
}

fn check_classes(classes: &[usize]) -> Result<Vec<usize>> {
    if classes.is_empty() {
        return Err(Error::Dataset("class filter is empty".into()));
    }
    if let Some(c) = classes.iter().find(|&&c| c >= NUM_CLASSES) {
        return Err(Error::Dataset(format!("class id {c} outside 0..{NUM_CLASSES}")));
    }
    let mut sorted = classes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(sorted)
}

/// Parses one file's bytes, keeping records whose label is in `classes`.
pub fn parse_records(
    bytes: &[u8],
    source: &Path,
    classes: &[usize],
    pixels: &mut Vec<u8>,
    labels: &mut Vec<usize>,
) -> Result<()> {
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Dataset(format!(
            "{}: truncated record ({} bytes is not a multiple of {RECORD_LEN})",
            source.display(),
            bytes.len()
        )));
    }
    for (r, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = rec[0] as usize;
        if label >= NUM_CLASSES {
            return Err(Error::Dataset(format!(
                "{}: record {r} has label {label} (> 9)",
                source.display()
            )));
        }
        if let Some(pos) = classes.iter().position(|&c| c == label) {
            labels.push(pos);
            pixels.extend_from_slice(&rec[1..]);
        }
    }
    Ok(())
}

/// Loads one split of CIFAR-10 from `dir`, keeping only `classes`.
pub fn load_cifar10(dir: &Path, classes: &[usize], split: Split) -> Result<Dataset> {
    let classes = check_classes(classes)?;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for name in split.files() {
        let path: PathBuf = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Dataset(format!("missing CIFAR-10 file {}", path.display()))
            } else {
                Error::io(&path, e)
            }
        })?;
        parse_records(&bytes, &path, &classes, &mut pixels, &mut labels)?;
    }
    Dataset::from_raw(pixels, labels, classes, split)
}

/// The first `k` classes in CIFAR-10 label order.
pub fn first_classes(k: usize) -> Vec<usize> {
    (0..k.min(NUM_CLASSES)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![fill; RECORD_LEN];
        r[0] = label;
        r
    }

    #[test]
    fn parses_and_filters() {
        let mut bytes = record(3, 10);
        bytes.extend(record(1, 255));
        bytes.extend(record(0, 0));
        let (mut px, mut lb) = (Vec::new(), Vec::new());
        parse_records(&bytes, Path::new("x"), &[0, 1], &mut px, &mut lb).unwrap();
        assert_eq!(lb, vec![1, 0]);
        let ds = Dataset::from_raw(px, lb, vec![0, 1], Split::Train).unwrap();
        assert_eq!(ds.image(0).data()[0], 1.0);
        assert_eq!(ds.image(1).data()[5], 0.0);
        assert_eq!(ds.class_counts(), vec![1, 1]);
    }

    #[test]
    fn channel_major_layout() {
        let mut rec = record(0, 0);
        rec[1] = 255; // R(0,0)
        rec[1 + 1024 + 33] = 51; // G(1,1)
        let (mut px, mut lb) = (Vec::new(), Vec::new());
        parse_records(&rec, Path::new("x"), &[0], &mut px, &mut lb).unwrap();
        let ds = Dataset::from_raw(px, lb, vec![0], Split::Test).unwrap();
        let img = ds.image(0);
        assert_eq!(img.shape(), &[3, 32, 32]);
        assert_eq!(img.data()[0], 1.0);
        assert_eq!(img.data()[1024 + 32 + 1], 0.2);
    }

    #[test]
    fn truncation_and_bad_label() {
        let (mut px, mut lb) = (Vec::new(), Vec::new());
        let short = &record(0, 0)[..100];
        assert!(matches!(
            parse_records(short, Path::new("x"), &[0], &mut px, &mut lb),
            Err(Error::Dataset(m)) if m.contains("truncated")
        ));
        assert!(parse_records(&record(10, 0), Path::new("x"), &[0], &mut px, &mut lb).is_err());
    }

    #[test]
    fn class_filter_checks() {
        assert!(check_classes(&[]).is_err());
        assert!(check_classes(&[10]).is_err());
        assert_eq!(check_classes(&[4, 1, 1]).unwrap(), vec![1, 4]);
    }

    #[test]
    fn missing_directory() {
        let err = load_cifar10(Path::new("/nonexistent/cifar"), &[0], Split::Train).unwrap_err();
        assert!(matches!(err, Error::Dataset(m) if m.contains("missing")));
    }

    #[test]
    fn subset_is_seeded() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let pixels: Vec<u8> = (0..20).flat_map(|i| vec![i as u8; PIXELS]).collect();
        let ds = Dataset::from_raw(pixels, labels, vec![0, 1], Split::Train).unwrap();
        let a = ds.subset(7, SeedStream::root(1)).unwrap();
        let b = ds.subset(7, SeedStream::root(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        assert!(ds.subset(21, SeedStream::root(1)).is_err());
    }
}

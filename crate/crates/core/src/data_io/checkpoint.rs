//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "QSSLCKPT"
//! version  u32
//! digest   32 bytes  SHA-256 of the encoder configuration JSON
//! header   u64 length + UTF-8 JSON {"encoder": .., "meta": ..}
//! count    u64 number of arrays
//! arrays   repeated: u32 name length, name, u32 rank, rank x u64 dims,
//!          product(dims) x f64 (IEEE-754)
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical_nn::{EncoderConfig, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"QSSLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderConfig,
    /// Free-form run metadata (batch counter, seed, ...).
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    encoder: EncoderConfig,
    meta: serde_json::Value,
}

fn config_digest(encoder: &EncoderConfig) -> [u8; 32] {
    Sha256::digest(serde_json::to_vec(encoder).expect("config serializes")).into()
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.array(name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no array `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            encoder: self.encoder.clone(),
            meta: self.meta.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&config_digest(&self.encoder));
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.arrays.len() as u64).to_le_bytes());
        for (name, t) in &self.arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic bytes (not a checkpoint)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let header_len = r.len()?;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
        if config_digest(&header.encoder) != digest {
            return Err(Error::Format("config digest mismatch (header corrupted)".into()));
        }
        let count = r.len()?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| Error::Format(format!("array `{name}` has implausible shape")))?;
            let data = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last array",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            encoder: header.encoder,
            meta: header.meta,
            arrays,
        })
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless the stored encoder configuration equals `expected`.
    pub fn check_encoder(&self, expected: &EncoderConfig) -> Result<()> {
        if &self.encoder == expected {
            return Ok(());
        }
        Err(Error::ConfigMismatch(format!(
            "checkpoint encoder (W={}, {}, {} layers) differs from the run configuration (W={}, {}, {} layers)",
            self.encoder.width,
            self.encoder.representation.name(),
            self.encoder.qnn_layers,
            expected.width,
            expected.representation.name(),
            expected.qnn_layers,
        )))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format("length overflows usize".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            encoder: EncoderConfig::default(),
            meta: serde_json::json!({"batch": 25, "seed": u64::MAX}),
            arrays: vec![
                ("a".into(), Tensor::new(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap()),
                ("empty".into(), Tensor::new(vec![0], vec![]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.meta, c.meta);
        assert_eq!(back.encoder, c.encoder);
        for ((n1, a), (n2, b)) in c.arrays.iter().zip(&back.arrays) {
            assert_eq!(n1, n2);
            assert_eq!(a.shape(), b.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corrupted_magic() {
        let mut b = sample().to_bytes();
        b[0] ^= 0xff;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn wrong_version() {
        let mut b = sample().to_bytes();
        b[8] = 99;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn digest_mismatch() {
        let mut b = sample().to_bytes();
        b[12] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Format(m)) if m.contains("digest")));
    }

    #[test]
    fn truncation_anywhere_is_an_error() {
        let b = sample().to_bytes();
        for cut in [0, 5, 11, 40, b.len() / 2, b.len() - 1] {
            assert!(Checkpoint::from_bytes(&b[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn encoder_mismatch() {
        let c = sample();
        let other = EncoderConfig {
            width: 8,
            projection_widths: vec![8, 8],
            ..EncoderConfig::default()
        };
        assert!(matches!(c.check_encoder(&other), Err(Error::ConfigMismatch(_))));
        c.check_encoder(&EncoderConfig::default()).unwrap();
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        sample().save(&path).unwrap();
        assert!(!path.with_extension("tmp").exists());
        assert_eq!(Checkpoint::load(&path).unwrap(), sample());
        assert!(matches!(
            Checkpoint::load(&dir.path().join("missing.ckpt")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_arrays_round_trip(values in proptest::collection::vec(any::<f64>(), 0..40)) {
            let n = values.len();
            let c = Checkpoint {
                encoder: EncoderConfig::default(),
                meta: serde_json::Value::Null,
                arrays: vec![("x".into(), Tensor::new(vec![n], values.clone()).unwrap())],
            };
            let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
            let got: Vec<u64> = back.arrays[0].1.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}

//! Per-channel normalization statistics.

use serde::{Deserialize, Serialize};

use super::cifar::{Dataset, CHANNELS, IMAGE_SIZE};
use crate::classical_nn::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl ChannelStats {
    pub fn identity() -> Self {
        ChannelStats {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    /// Mean and population standard deviation of each channel over all
    /// pixels of `dataset` (values in `[0, 1]`).
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Dataset("cannot compute statistics of an empty dataset".into()));
        }
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        // Integer sums keep the result independent of summation order.
        let mut sum = [0u64; CHANNELS];
        let mut sq = [0u64; CHANNELS];
        for i in 0..dataset.len() {
            for (c, chunk) in dataset.raw_image(i).chunks(plane).enumerate() {
                for &b in chunk {
                    sum[c] += b as u64;
                    sq[c] += (b as u64) * (b as u64);
                }
            }
        }
        let n = (dataset.len() * plane) as f64;
        let mut mean = [0.0; CHANNELS];
        let mut std = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            let m = sum[c] as f64 / n;
            let var = (sq[c] as f64 / n - m * m).max(0.0);
            mean[c] = m / 255.0;
            std[c] = var.sqrt() / 255.0;
            if std[c] < 1e-12 {
                std[c] = 1.0;
            }
        }
        Ok(ChannelStats { mean, std })
    }

    /// `(x - mean_c) / std_c` for a `[B, 3, H, W]` tensor.
    pub fn normalize(&self, images: &Tensor) -> Result<Tensor> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != CHANNELS {
            return Err(Error::Shape(format!("normalize expects [B, 3, H, W], got {shape:?}")));
        }
        let plane = shape[2] * shape[3];
        let mut out = images.clone();
        for (k, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let c = k % CHANNELS;
            chunk
                .iter_mut()
                .for_each(|v| *v = (*v - self.mean[c]) / self.std[c]);
        }
        Ok(out)
    }
}

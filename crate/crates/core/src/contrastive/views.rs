//! Positive-pair view batches.

use rayon::prelude::*;

use super::augment::{augment, AugmentConfig};
use crate::classical_nn::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    /// `[2N, 3, S, S]`; views `2i` and `2i + 1` come from image `i`.
    pub views: Tensor,
    pub pair_index: Vec<usize>,
    pub base_index: Vec<usize>,
}

/// Checks that `pair_index` pairs `2N >= 4` views with a fixed-point-free
/// involution.
pub fn check_pairing(pair_index: &[usize]) -> Result<()> {
    let n = pair_index.len();
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "need 2N views with N >= 2, got {n}"
        )));
    }
    for (a, &b) in pair_index.iter().enumerate() {
        if b >= n || b == a || pair_index[b] != a {
            return Err(Error::InvalidArgument(format!(
                "pair index is not a fixed-point-free involution at view {a}"
            )));
        }
    }
    Ok(())
}

/// Two independent augmentations per image; view `v` draws from `stream/v`.
pub fn make_view_batch(images: &Tensor, cfg: &AugmentConfig, stream: SeedStream) -> Result<ViewBatch> {
    let shape = images.shape();
    if shape.len() != 4 {
        return Err(Error::Shape(format!("view batch expects [N, 3, S, S], got {shape:?}")));
    }
    let n = shape[0];
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "contrastive batches need N >= 2 images, got {n}"
        )));
    }
    cfg.validate()?;
    let views: Vec<Tensor> = (0..2 * n)
        .into_par_iter()
        .map(|v| augment(&images.slice_leading(v / 2), cfg, &mut stream.child(v as u64).rng()))
        .collect::<Result<_>>()?;
    Ok(ViewBatch {
        views: Tensor::stack(&views)?,
        pair_index: (0..2 * n).map(|v| v ^ 1).collect(),
        base_index: (0..2 * n).map(|v| v / 2).collect(),
    })
}

//! Random view generation: crop -> rotate -> blur -> colour jitter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classical_nn::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Fraction of the image area kept by the square crop, resized back.
    pub crop_scale: [f64; 2],
    pub crop_prob: f64,
    pub rotation_degrees: [f64; 2],
    pub rotation_prob: f64,
    /// Odd Gaussian kernel size.
    pub blur_kernel: usize,
    pub blur_sigma: [f64; 2],
    pub blur_prob: f64,
    /// Brightness, contrast and saturation factors drawn from `[1-s, 1+s]`.
    pub jitter: f64,
    pub jitter_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_scale: [0.6, 1.0],
            crop_prob: 1.0,
            rotation_degrees: [-15.0, 15.0],
            rotation_prob: 0.5,
            blur_kernel: 3,
            blur_sigma: [0.1, 1.0],
            blur_prob: 0.5,
            jitter: 0.4,
            jitter_prob: 0.8,
        }
    }
}

impl AugmentConfig {
    /// Every operation disabled; `augment` returns its input.
    pub fn identity() -> Self {
        AugmentConfig {
            crop_scale: [1.0, 1.0],
            rotation_degrees: [0.0, 0.0],
            blur_prob: 0.0,
            jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("augmentation: {m}")));
        let [s0, s1] = self.crop_scale;
        if !(s0 > 0.0 && s0 <= s1 && s1 <= 1.0) {
            return bad("crop scale must satisfy 0 < lo <= hi <= 1");
        }
        let [r0, r1] = self.rotation_degrees;
        if !(r0.is_finite() && r1.is_finite() && r0 <= r1) {
            return bad("rotation range must be ordered");
        }
        if self.blur_kernel == 0 || self.blur_kernel % 2 == 0 {
            return bad("blur kernel must be odd");
        }
        let [b0, b1] = self.blur_sigma;
        if !(b0 > 0.0 && b0 <= b1 && b1.is_finite()) {
            return bad("blur sigma range must satisfy 0 < lo <= hi");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad("jitter strength must be in [0, 1)");
        }
        for p in [self.crop_prob, self.rotation_prob, self.blur_prob, self.jitter_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Bilinear sample with edge clamping.
fn bilinear(plane: &[f64], size: usize, y: f64, x: f64) -> f64 {
    let max = (size - 1) as f64;
    let (y, x) = (y.clamp(0.0, max), x.clamp(0.0, max));
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(size - 1), (x0 + 1).min(size - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = plane[y0 * size + x0] * (1.0 - fx) + plane[y0 * size + x1] * fx;
    let bottom = plane[y1 * size + x0] * (1.0 - fx) + plane[y1 * size + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

fn remap(img: &mut [f64], size: usize, map: impl Fn(f64, f64) -> (f64, f64)) {
    let plane = size * size;
    for ch in img.chunks_mut(plane) {
        let src = ch.to_vec();
        for i in 0..size {
            for j in 0..size {
                let (y, x) = map(i as f64, j as f64);
                ch[i * size + j] = bilinear(&src, size, y, x);
            }
        }
    }
}

fn crop<R: Rng + ?Sized>(img: &mut [f64], size: usize, cfg: &AugmentConfig, rng: &mut R) {
    let s = size as f64;
    let mut side = s * uniform(rng, cfg.crop_scale).sqrt();
    // A sub-pixel crop carries no content; redraw, then fall back to full.
    for _ in 0..10 {
        if side >= 1.0 {
            break;
        }
        side = s * uniform(rng, cfg.crop_scale).sqrt();
    }
    if side < 1.0 {
        side = s;
    }
    let y0 = uniform(rng, [0.0, s - side]);
    let x0 = uniform(rng, [0.0, s - side]);
    if side == s && y0 == 0.0 && x0 == 0.0 {
        return;
    }
    let k = side / s;
    remap(img, size, |i, j| (y0 + (i + 0.5) * k - 0.5, x0 + (j + 0.5) * k - 0.5));
}

fn rotate(img: &mut [f64], size: usize, degrees: f64) {
    if degrees == 0.0 {
        return;
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let c = (size as f64 - 1.0) / 2.0;
    remap(img, size, |i, j| {
        let (dy, dx) = (i - c, j - c);
        (c + cos * dy - sin * dx, c + sin * dy + cos * dx)
    });
}

fn blur(img: &mut [f64], size: usize, kernel: usize, sigma: f64) {
    let r = (kernel / 2) as isize;
    let mut w: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let clamp = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let plane = size * size;
    for ch in img.chunks_mut(plane) {
        let src = ch.to_vec();
        let mut tmp = vec![0.0; plane];
        for i in 0..size {
            for j in 0..size {
                tmp[i * size + j] = (-r..=r)
                    .zip(&w)
                    .map(|(d, k)| k * src[i * size + clamp(j as isize + d)])
                    .sum();
            }
        }
        for i in 0..size {
            for j in 0..size {
                ch[i * size + j] = (-r..=r)
                    .zip(&w)
                    .map(|(d, k)| k * tmp[clamp(i as isize + d) * size + j])
                    .sum();
            }
        }
    }
}

fn jitter<R: Rng + ?Sized>(img: &mut [f64], size: usize, strength: f64, rng: &mut R) {
    let range = [1.0 - strength, 1.0 + strength];
    let (brightness, contrast, saturation) = (uniform(rng, range), uniform(rng, range), uniform(rng, range));
    let plane = size * size;
    img.iter_mut().for_each(|v| *v = (*v * brightness).clamp(0.0, 1.0));
    let gray = |img: &[f64], p: usize| 0.299 * img[p] + 0.587 * img[plane + p] + 0.114 * img[2 * plane + p];
    let mean = (0..plane).map(|p| gray(img, p)).sum::<f64>() / plane as f64;
    img.iter_mut()
        .for_each(|v| *v = ((*v - mean) * contrast + mean).clamp(0.0, 1.0));
    for p in 0..plane {
        let g = gray(img, p);
        for c in 0..3 {
            let v = &mut img[c * plane + p];
            *v = ((*v - g) * saturation + g).clamp(0.0, 1.0);
        }
    }
}

/// Applies the pipeline to one `[3, S, S]` image with values in `[0, 1]`.
pub fn augment<R: Rng + ?Sized>(image: &Tensor, cfg: &AugmentConfig, rng: &mut R) -> Result<Tensor> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 3 || shape[1] != shape[2] || shape[1] == 0 {
        return Err(Error::Shape(format!("augment expects [3, S, S], got {shape:?}")));
    }
    let size = shape[1];
    let mut img = image.data().to_vec();
    if rng.random_bool(cfg.crop_prob) {
        crop(&mut img, size, cfg, rng);
    }
    if rng.random_bool(cfg.rotation_prob) {
        rotate(&mut img, size, uniform(rng, cfg.rotation_degrees));
    }
    if rng.random_bool(cfg.blur_prob) {
        blur(&mut img, size, cfg.blur_kernel, uniform(rng, cfg.blur_sigma));
    }
    if cfg.jitter > 0.0 && rng.random_bool(cfg.jitter_prob) {
        jitter(&mut img, size, cfg.jitter, rng);
    }
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Tensor::new(shape.to_vec(), img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(seed: u64, size: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * size * size).map(|_| rng.random_range(0.0..=1.0)).collect();
        Tensor::new(vec![3, size, size], data).unwrap()
    }

    #[test]
    fn identity_config_is_exact() {
        let img = image(1, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            assert_eq!(augment(&img, &AugmentConfig::identity(), &mut rng).unwrap(), img);
        }
    }

    #[test]
    fn seeded_outputs_repeat() {
        let img = image(1, 32);
        let cfg = AugmentConfig::default();
        let a = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn blur_preserves_constant_image() {
        let mut img = vec![0.3; 3 * 16];
        blur(&mut img, 4, 3, 0.7);
        assert!(img.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn quarter_turn_moves_corners() {
        let size = 3;
        let mut img = vec![0.0; 3 * 9];
        img[0] = 1.0; // top-left of the red plane
        rotate(&mut img, size, 90.0);
        let hot: Vec<usize> = (0..9).filter(|&p| img[p] > 0.5).collect();
        assert_eq!(hot.len(), 1);
        assert_ne!(hot[0], 0);
        assert!([2, 6].contains(&hot[0]));
    }

    #[test]
    fn validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        assert!(AugmentConfig::identity().validate().is_ok());
        let mut c = AugmentConfig::default();
        c.crop_scale = [0.9, 0.5];
        assert!(c.validate().is_err());
        let mut c = AugmentConfig::default();
        c.blur_kernel = 4;
        assert!(c.validate().is_err());
        let mut c = AugmentConfig::default();
        c.blur_prob = 1.5;
        assert!(c.validate().is_err());
        assert!(augment(&Tensor::zeros(&[1, 4, 4]), &c, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn shape_and_range_preserved(
            seed in any::<u64>(),
            lo in 0.05f64..1.0,
            rot in 0.0f64..180.0,
            jit in 0.0f64..0.99,
        ) {
            let cfg = AugmentConfig {
                crop_scale: [lo, 1.0],
                rotation_degrees: [-rot, rot],
                rotation_prob: 1.0,
                blur_prob: 1.0,
                jitter: jit,
                jitter_prob: 1.0,
                ..AugmentConfig::default()
            };
            let out = augment(&image(seed, 32), &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out.shape(), &[3, 32, 32]);
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

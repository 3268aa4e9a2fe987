//! Procedural stand-in for CIFAR-10 written in the exact binary format.
//!
//! Every class is a distinct spatial pattern (stripes of three
//! orientations, checkerboard, disc, ring, cross, square frame, gradient,
//! speckle) drawn with random colours, phase, scale and position plus pixel
//! noise, so class identity survives cropping and colour jitter only
//! partially, the way real object classes do.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::cifar::{IMAGE_SIZE, NUM_CLASSES, PIXELS, RECORD_LEN, TEST_FILE, TRAIN_FILES};
use crate::error::{Error, Result};
use crate::rng::{domain, SeedStream, StreamRng};

fn pattern(class: usize, y: f64, x: f64, p: &[f64; 4]) -> f64 {
    let [freq, phase, cy, cx] = *p;
    let s = |t: f64| if (t * freq + phase).sin() >= 0.0 { 1.0 } else { 0.0 };
    let r = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
    let radius = 4.0 + 8.0 * (freq - 0.4) / 0.6;
    match class {
        0 => s(y),
        1 => s(x),
        2 => s((x + y) * std::f64::consts::FRAC_1_SQRT_2),
        3 => {
            if (s(x) + s(y)) as u8 % 2 == 0 { 1.0 } else { 0.0 }
        }
        4 => (r <= radius) as u8 as f64,
        5 => ((r - radius).abs() <= 2.0) as u8 as f64,
        6 => ((y - cy).abs() <= 2.5 || (x - cx).abs() <= 2.5) as u8 as f64,
        7 => {
            let d = (y - cy).abs().max((x - cx).abs());
            ((d - radius).abs() <= 1.5) as u8 as f64
        }
        8 => ((x + phase * 3.0) / IMAGE_SIZE as f64).fract(),
        _ => (((x * 0.7 + phase).sin() * (y * 1.3 + cx).cos() * 43758.5453).fract()).abs(),
    }
}

/// One image of `class` as raw channel-major bytes.
pub fn synthetic_image(class: usize, rng: &mut StreamRng) -> Vec<u8> {
    let mid = IMAGE_SIZE as f64 / 2.0;
    let params = [
        rng.random_range(0.4..1.0),
        rng.random_range(0.0..std::f64::consts::TAU),
        mid + rng.random_range(-6.0..6.0),
        mid + rng.random_range(-6.0..6.0),
    ];
    let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    let bg: [f64; 3] = std::array::from_fn(|c| {
        // Keep foreground and background apart so the pattern is visible.
        let v: f64 = rng.random_range(0.0..1.0);
        if (v - fg[c]).abs() < 0.3 { (fg[c] + 0.5) % 1.0 } else { v }
    });
    let mut out = vec![0u8; PIXELS];
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    for yy in 0..IMAGE_SIZE {
        for xx in 0..IMAGE_SIZE {
            let t = pattern(class, yy as f64, xx as f64, &params);
            for c in 0..3 {
                let noise: f64 = rng.random_range(-0.08..0.08);
                let v = (bg[c] + t * (fg[c] - bg[c]) + noise).clamp(0.0, 1.0);
                out[c * plane + yy * IMAGE_SIZE + xx] = (v * 255.0).round() as u8;
            }
        }
    }
    out
}

/// Bytes of one file with `records` images; classes cycle so each file is
/// balanced when `records` is a multiple of ten.
pub fn synthetic_file(records: usize, stream: SeedStream) -> Vec<u8> {
    let mut order: Vec<u8> = (0..records).map(|i| (i % NUM_CLASSES) as u8).collect();
    let mut rng = stream.rng();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut bytes = Vec::with_capacity(records * RECORD_LEN);
    for (i, &label) in order.iter().enumerate() {
        bytes.push(label);
        bytes.extend(synthetic_image(label as usize, &mut stream.child(i as u64 + 1).rng()));
    }
    bytes
}

/// Writes the five training files and the test file into `dir`, each with
/// `records_per_file` records.
pub fn write_synthetic_cifar(dir: &Path, records_per_file: usize, seed: u64) -> Result<()> {
    if records_per_file == 0 {
        return Err(Error::InvalidArgument("records per file must be positive".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let root = SeedStream::root(seed).child(domain::DATA);
    let names = TRAIN_FILES.iter().chain(std::iter::once(&TEST_FILE));
    for (f, name) in names.enumerate() {
        let bytes = synthetic_file(records_per_file, root.child(f as u64));
        let path = dir.join(name);
        let mut file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::cifar::{load_cifar10, Split};

    #[test]
    fn round_trips_through_loader() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_cifar(dir.path(), 20, 3).unwrap();
        let train = load_cifar10(dir.path(), &[0, 1], Split::Train).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(train.class_counts(), vec![10, 10]);
        let test = load_cifar10(dir.path(), &[0, 1, 2, 3, 4], Split::Test).unwrap();
        assert_eq!(test.len(), 10);
    }

    #[test]
    fn deterministic() {
        assert_eq!(synthetic_file(10, SeedStream::root(4)), synthetic_file(10, SeedStream::root(4)));
        assert_ne!(synthetic_file(10, SeedStream::root(4)), synthetic_file(10, SeedStream::root(5)));
    }

    #[test]
    fn stripe_orientation_is_visible() {
        let vertical_energy = |class: usize| -> f64 {
            let mut e = 0.0;
            for i in 0..20 {
                let img = synthetic_image(class, &mut SeedStream::root(100 + i).rng());
                for y in 0..31 {
                    for x in 0..32 {
                        e += (img[y * 32 + x] as f64 - img[(y + 1) * 32 + x] as f64).abs();
                    }
                }
            }
            e
        };
        // Horizontal stripes change along y; vertical stripes do not.
        assert!(vertical_energy(0) > 2.0 * vertical_energy(1));
    }
}

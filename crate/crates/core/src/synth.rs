//! Synthetic ridge-like images for tests and desk-scale experiments.
//!
//! Each identity is a sinusoidal grating (straight or ring-shaped) with its
//! own period. Impressions of an identity jitter the angle, period, phase,
//! contrast and visible area, and add pixel noise.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{io::save_png, RawImage};
use crate::protocol::{Role, SampleRecord};

/// `128 + amplitude·cos(2π·across/period + phase)` where `across` is the
/// coordinate perpendicular to ridges running at `theta` (x right, y down).
pub fn grating(
    width: usize,
    height: usize,
    theta: f64,
    period: f64,
    phase: f64,
    amplitude: f64,
) -> Result<RawImage> {
    let (s, c) = theta.sin_cos();
    RawImage::from_fn(width, height, |x, y| {
        let across = -(x as f64) * s + (y as f64) * c;
        to_u8(128.0 + amplitude * (2.0 * PI * across / period + phase).cos())
    })
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub identities: usize,
    /// Training impressions per identity; the first is also enrolled as the
    /// gallery template.
    pub train_per_identity: usize,
    /// Held-out probe impressions per identity.
    pub probes_per_identity: usize,
    pub image_size: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            identities: 8,
            train_per_identity: 20,
            probes_per_identity: 1,
            image_size: 128,
            noise_sd: 6.0,
            seed: 7,
        }
    }
}

/// Period range at a 128 px image; scaled linearly for other sizes.
const MIN_PERIOD: f64 = 10.0;
const MAX_PERIOD: f64 = 22.0;

/// Ridge layout of a synthetic identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RidgeShape {
    /// Straight ridges running at the given angle.
    Straight(f64),
    /// Concentric rings around the centre of the visible region.
    Rings,
}

/// Ridge shape and period of identity `index` out of `n`.
///
/// Shapes cycle through horizontal, vertical and rings. All three are mapped
/// onto themselves by a horizontal flip and stay far apart under small
/// rotations, so augmentation never turns one identity into another. Within
/// a shape, periods are spaced geometrically over [10, 22] px (for a 128 px
/// image); with many identities neighbouring periods get close and the task
/// gets harder.
pub fn identity_pattern(index: usize, n: usize) -> (RidgeShape, f64) {
    let levels = n.div_ceil(3).max(1);
    let step = if levels > 1 {
        (MAX_PERIOD / MIN_PERIOD).powf(1.0 / (levels - 1) as f64)
    } else {
        1.0
    };
    let shape = match index % 3 {
        0 => RidgeShape::Straight(0.0),
        1 => RidgeShape::Straight(PI / 2.0),
        _ => RidgeShape::Rings,
    };
    (shape, MIN_PERIOD * step.powi((index / 3) as i32))
}

/// One noisy impression of identity `index`.
pub fn impression<R: Rng>(index: usize, spec: &CorpusSpec, rng: &mut R) -> Result<RawImage> {
    let (shape, period0) = identity_pattern(index, spec.identities);
    let jitter = rng.random_range(-4.0f64..4.0).to_radians();
    let period = period0 * spec.image_size as f64 / 128.0 * rng.random_range(0.97..1.03);
    let phase = rng.random_range(0.0..2.0 * PI);
    let amplitude = rng.random_range(45.0..75.0);
    let size = spec.image_size as f64;
    let cx = size / 2.0 + rng.random_range(-0.08..0.08) * size;
    let cy = size / 2.0 + rng.random_range(-0.08..0.08) * size;
    let ax = rng.random_range(0.3..0.42) * size;
    let ay = rng.random_range(0.3..0.42) * size;
    let noise =
        Normal::new(0.0, spec.noise_sd.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let across = |x: f64, y: f64| match shape {
        RidgeShape::Straight(theta) => {
            let (s, c) = (theta + jitter).sin_cos();
            -x * s + y * c
        }
        RidgeShape::Rings => (x - cx).hypot(y - cy),
    };
    let n = spec.image_size;
    let pixels = (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64, (i / n) as f64);
            let inside = ((x - cx) / ax).powi(2) + ((y - cy) / ay).powi(2) <= 1.0;
            let ridge = if inside {
                amplitude * (2.0 * PI * across(x, y) / period + phase).cos()
            } else {
                0.0
            };
            to_u8(128.0 + ridge + noise.sample(rng))
        })
        .collect();
    RawImage::new(n, n, pixels)
}

/// Writes `images/*.png` and `manifest.csv` under `dir` and returns the
/// records. Paths in the manifest are relative to `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, spec: &CorpusSpec) -> Result<Vec<SampleRecord>> {
    if spec.identities == 0 || spec.train_per_identity == 0 {
        return Err(Error::Config(
            "corpus needs at least one identity and one training impression".into(),
        ));
    }
    let dir = dir.as_ref();
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut records = Vec::new();
    for id in 0..spec.identities {
        let mut rng =
            ChaCha8Rng::seed_from_u64(spec.seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let subject = format!("id{id:02}");
        let roles = (0..spec.train_per_identity)
            .map(|k| {
                (
                    if k == 0 { Role::Gallery } else { Role::Train },
                    format!("t{k:02}"),
                )
            })
            .chain((0..spec.probes_per_identity).map(|k| (Role::Probe, format!("p{k:02}"))));
        for (role, tag) in roles {
            let img = impression(id, spec, &mut rng)?;
            let sample_id = format!("{subject}_{tag}");
            let rel = PathBuf::from("images").join(format!("{sample_id}.png"));
            save_png(&img, dir.join(&rel))?;
            records.push(SampleRecord {
                sample_id,
                path: rel,
                subject_id: subject.clone(),
                finger_id: "f0".into(),
                role,
                subset: None,
            });
        }
    }
    crate::protocol::write_manifest(dir.join("manifest.csv"), &records)?;
    Ok(records)
}

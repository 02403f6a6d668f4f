//! Random geometric and photometric perturbations of encoder inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::filters::{filter_cols, filter_rows};
use crate::imaging::ModelInput;

/// Fill value for pixels rotated in from outside the image (normalized black).
const ROTATION_FILL: f32 = -1.0;
const BLUR_SIGMA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationPolicy {
    /// Rotation angle is drawn from U(−rotation_deg, rotation_deg).
    pub rotation_deg: f64,
    pub hflip_prob: f64,
    /// Brightness shift and contrast change are each drawn from U(−δ, δ).
    pub brightness_contrast_delta: f64,
    /// Gaussian blur width; 1 disables blurring.
    pub blur_kernel: usize,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            rotation_deg: 15.0,
            hflip_prob: 0.5,
            brightness_contrast_delta: 0.1,
            blur_kernel: 3,
        }
    }
}

impl AugmentationPolicy {
    /// Leaves every input unchanged.
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            hflip_prob: 0.0,
            brightness_contrast_delta: 0.0,
            blur_kernel: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config(format!(
                "hflip_prob {} outside [0, 1]",
                self.hflip_prob
            )));
        }
        if self.blur_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "blur_kernel must be odd, got {}",
                self.blur_kernel
            )));
        }
        if !(self.rotation_deg >= 0.0 && self.brightness_contrast_delta >= 0.0) {
            return Err(Error::Config(
                "rotation and brightness/contrast ranges must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Rotation, horizontal flip, brightness/contrast, blur, in that order.
/// Every random draw happens regardless of the policy values, so the
/// sequence consumed from `rng` depends only on the call count.
pub fn augment<R: Rng>(
    input: &ModelInput,
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> Result<ModelInput> {
    policy.validate()?;
    let n = input.size();
    let angle = policy.rotation_deg.to_radians() * rng.random_range(-1.0..=1.0);
    let flip = rng.random::<f64>() < policy.hflip_prob;
    let delta = policy.brightness_contrast_delta;
    let brightness = delta * rng.random_range(-1.0..=1.0);
    let contrast = 1.0 + delta * rng.random_range(-1.0..=1.0);

    let mut plane = if angle == 0.0 {
        input.plane().to_vec()
    } else {
        rotate(input.plane(), n, angle)
    };
    if flip {
        hflip(&mut plane, n);
    }
    if brightness != 0.0 || contrast != 1.0 {
        for v in &mut plane {
            *v = (f64::from(*v) * contrast + brightness).clamp(-1.0, 1.0) as f32;
        }
    }
    if policy.blur_kernel > 1 {
        plane = blur(&plane, n, policy.blur_kernel);
    }
    ModelInput::new(n, plane)
}

/// Rotates by `angle` radians about the image center with
/// bilinear sampling; output pixel (x, y) reads the input at the inverse-rotated position.
pub fn rotate(plane: &[f32], n: usize, angle: f64) -> Vec<f32> {
    let c = (n as f64 - 1.0) / 2.0;
    let (s, co) = angle.sin_cos();
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= n as isize || y >= n as isize {
            f64::from(ROTATION_FILL)
        } else {
            f64::from(plane[y as usize * n + x as usize])
        }
    };
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            // inverse mapping of a rotation by `angle`
            let sx = co * dx - s * dy + c;
            let sy = s * dx + co * dy + c;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (xi, yi) = (x0 as isize, y0 as isize);
            let v = at(xi, yi) * (1.0 - fx) * (1.0 - fy)
                + at(xi + 1, yi) * fx * (1.0 - fy)
                + at(xi, yi + 1) * (1.0 - fx) * fy
                + at(xi + 1, yi + 1) * fx * fy;
            out.push(v as f32);
        }
    }
    out
}

pub fn hflip(plane: &mut [f32], n: usize) {
    for row in plane.chunks_mut(n) {
        row.reverse();
    }
}

fn blur(plane: &[f32], n: usize, kernel: usize) -> Vec<f32> {
    let r = (kernel / 2) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    let src: Vec<f64> = plane.iter().map(|&v| f64::from(v)).collect();
    let rows = filter_rows(&src, n, n, &k);
    filter_cols(&rows, n, n, &k)
        .into_iter()
        .map(|v| v as f32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(seed: u64) -> ModelInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelInput::new(
            32,
            (0..32 * 32).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_policy_is_identity() {
        let x = input(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            assert_eq!(
                augment(&x, &AugmentationPolicy::identity(), &mut rng).unwrap(),
                x
            );
        }
    }

    #[test]
    fn same_state_same_output() {
        let x = input(3);
        let p = AugmentationPolicy::default();
        let a = augment(&x, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = augment(&x, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let c = augment(&x, &p, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forced_flip_twice_restores() {
        let x = input(4);
        let p = AugmentationPolicy {
            hflip_prob: 1.0,
            ..AugmentationPolicy::identity()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let once = augment(&x, &p, &mut rng).unwrap();
        assert_ne!(once, x);
        let twice = augment(&once, &p, &mut rng).unwrap();
        assert_eq!(twice, x);
    }

    #[test]
    fn quarter_turn_matches_transpose_flip() {
        let x = input(5);
        let n = 32;
        let r = rotate(x.plane(), n, std::f64::consts::FRAC_PI_2);
        // inverse map of +90°: source = (y', n-1-x') relative layout
        for y in 0..n {
            for xx in 0..n {
                let want = x.plane()[xx * n + (n - 1 - y)];
                assert!((r[y * n + xx] - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rotation_fills_corners() {
        let x = ModelInput::new(32, vec![1.0; 32 * 32]).unwrap();
        let r = rotate(x.plane(), 32, 0.25);
        assert!((r[0] - ROTATION_FILL).abs() < 1e-6);
        assert!((r[16 * 32 + 16] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn outputs_stay_in_range() {
        let x = input(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let y = augment(&x, &AugmentationPolicy::default(), &mut rng).unwrap();
            assert!(y.plane().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn invalid_policies() {
        let x = input(8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = AugmentationPolicy {
            blur_kernel: 4,
            ..Default::default()
        };
        assert!(augment(&x, &p, &mut rng).is_err());
        let p = AugmentationPolicy {
            hflip_prob: 1.5,
            ..Default::default()
        };
        assert!(augment(&x, &p, &mut rng).is_err());
    }
}

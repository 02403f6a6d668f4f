use std::f64::consts::PI;

use rayon::prelude::*;

use super::{OrientationField, RawImage};
use crate::error::{Error, Result};

/// Envelope width in units of the ridge period.
const SIGMA_PER_PERIOD: f64 = 0.65;

/// Even-symmetric, zero-mean Gabor kernel on a `(2r+1)²` grid.
#[derive(Debug, Clone)]
pub struct GaborKernel {
    pub radius: usize,
    pub values: Vec<f64>,
}

impl GaborKernel {
    #[inline]
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        let side = 2 * self.radius + 1;
        self.values[(dy + r) as usize * side + (dx + r) as usize]
    }
}

/// Kernel tuned to ridges running at `theta` with `frequency` cycles/pixel.
///
/// The cosine carrier varies across the ridges (along the ridge normal);
/// the kernel mean is subtracted so flat regions give no response.
pub fn gabor_kernel(theta: f64, frequency: f64) -> GaborKernel {
    let sigma = SIGMA_PER_PERIOD / frequency;
    let radius = (3.0 * sigma).ceil() as usize;
    let r = radius as isize;
    let (s, c) = theta.sin_cos();
    let mut values = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            let (dx, dy) = (dx as f64, dy as f64);
            let across = -dx * s + dy * c;
            let along = dx * c + dy * s;
            let env = (-(across * across + along * along) / (2.0 * sigma * sigma)).exp();
            values.push(env * (2.0 * PI * frequency * across).cos());
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    GaborKernel { radius, values }
}

fn check(img: &RawImage, field: &OrientationField, frequency: f64) -> Result<()> {
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::Config(format!(
            "gabor frequency must be positive, got {frequency}"
        )));
    }
    if !field.covers(img.width(), img.height()) {
        return Err(Error::Config(
            "orientation field does not cover the image".into(),
        ));
    }
    Ok(())
}

/// Raw filter response per pixel; pixels in background blocks are 0.
///
/// Borders are clamp-to-edge.
pub fn gabor_response(
    img: &RawImage,
    field: &OrientationField,
    frequency: f64,
) -> Result<Vec<f64>> {
    check(img, field, frequency)?;
    let (w, h) = (img.width(), img.height());
    let src = img.to_f64();
    let kernels: Vec<Option<GaborKernel>> = field
        .theta
        .iter()
        .zip(&field.foreground)
        .map(|(&t, &fg)| fg.then(|| gabor_kernel(t, frequency)))
        .collect();

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, dst) in row.iter_mut().enumerate() {
            let Some(k) = &kernels[field.block_index(x, y)] else {
                continue;
            };
            let r = k.radius as isize;
            let side = 2 * k.radius + 1;
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let src_row = &src[sy * w..(sy + 1) * w];
                let k_row = &k.values[(dy + r) as usize * side..(dy + r + 1) as usize * side];
                for (kv, dx) in k_row.iter().zip(-r..=r) {
                    let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    acc += kv * src_row[sx];
                }
            }
            *dst = acc;
        }
    });
    Ok(out)
}

/// Orientation-guided Gabor enhancement.
///
/// Foreground responses are min-max rescaled to `[0, 255]`; background is 0.
/// A flat response (range below 1e-6) maps to 0 everywhere.
pub fn gabor_enhance(img: &RawImage, field: &OrientationField, frequency: f64) -> Result<RawImage> {
    let resp = gabor_response(img, field, frequency)?;
    let w = img.width();
    let is_fg = |i: usize| field.foreground[field.block_index(i % w, i / w)];
    let (lo, hi) = (0..resp.len())
        .filter(|&i| is_fg(i))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(resp[i]), hi.max(resp[i]))
        });
    let range = hi - lo;
    let pixels = (0..resp.len())
        .map(|i| {
            if !is_fg(i) || !(range > 1e-6) {
                0
            } else {
                (255.0 * (resp[i] - lo) / range).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    RawImage::new(w, img.height(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::grating;

    fn mean_abs(v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn kernel_is_zero_mean_and_symmetric() {
        let k = gabor_kernel(0.6, 1.0 / 9.0);
        assert!(k.values.iter().sum::<f64>().abs() < 1e-9);
        for (dx, dy) in [(1, 2), (5, -3), (0, 7)] {
            assert!((k.at(dx, dy) - k.at(-dx, -dy)).abs() < 1e-12);
        }
    }

    #[test]
    fn matched_orientation_dominates_mismatched() {
        let f = 1.0 / 9.0;
        for deg in [0.0f64, 30.0, 45.0, 100.0] {
            let t = deg.to_radians();
            let field = OrientationField::uniform(128, 128, 16, t);
            let matched = grating(128, 128, t, 9.0, 0.0, 100.0).unwrap();
            let crossed = grating(128, 128, t + PI / 2.0, 9.0, 0.0, 100.0).unwrap();
            let rm = mean_abs(&gabor_response(&matched, &field, f).unwrap());
            let rc = mean_abs(&gabor_response(&crossed, &field, f).unwrap());
            assert!(rm >= 5.0 * rc, "{deg}: matched {rm} vs crossed {rc}");
        }
    }

    #[test]
    fn response_statistics_are_rotation_consistent() {
        let f = 1.0 / 9.0;
        let t = 20f64.to_radians();
        let a = grating(128, 128, t, 9.0, 0.0, 100.0).unwrap();
        let b = grating(128, 128, t + PI / 2.0, 9.0, 0.0, 100.0).unwrap();
        let ra = gabor_response(&a, &OrientationField::uniform(128, 128, 16, t), f).unwrap();
        let rb = gabor_response(
            &b,
            &OrientationField::uniform(128, 128, 16, t + PI / 2.0),
            f,
        )
        .unwrap();
        let (ma, mb) = (mean_abs(&ra), mean_abs(&rb));
        assert!((ma - mb).abs() / ma < 0.05, "{ma} vs {mb}");
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        assert!((sd(&ra) - sd(&rb)).abs() / sd(&ra) < 0.05);
    }

    #[test]
    fn constant_image_gives_constant_output() {
        let img = RawImage::filled(64, 64, 180).unwrap();
        let field = OrientationField::uniform(64, 64, 16, 0.3);
        let out = gabor_enhance(&img, &field, 1.0 / 9.0).unwrap();
        let first = out.pixels()[0];
        assert!(out.pixels().iter().all(|&p| p == first));
    }

    #[test]
    fn impulse_reproduces_rescaled_kernel() {
        let (w, h, cx, cy) = (96usize, 96usize, 48isize, 45isize);
        let theta = 0.7;
        let f = 1.0 / 8.0;
        let img = RawImage::from_fn(w, h, |x, y| {
            if (x as isize, y as isize) == (cx, cy) {
                255
            } else {
                0
            }
        })
        .unwrap();
        let field = OrientationField::uniform(w, h, 16, theta);
        let out = gabor_enhance(&img, &field, f).unwrap();

        // oracle: kernel values placed around the impulse, min-max rescaled
        let k = gabor_kernel(theta, f);
        let vals: Vec<f64> = (0..w * h)
            .map(|i| 255.0 * k.at(i as isize % w as isize - cx, i as isize / w as isize - cy))
            .collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, v) in vals.iter().enumerate() {
            let expect = 255.0 * (v - lo) / (hi - lo);
            assert!((out.pixels()[i] as f64 - expect).abs() <= 1.0, "pixel {i}");
        }
    }

    #[test]
    fn background_blocks_are_zero() {
        let img = grating(64, 64, 0.2, 9.0, 0.0, 100.0).unwrap();
        let mut field = OrientationField::uniform(64, 64, 16, 0.2);
        field.foreground[0] = false;
        let out = gabor_enhance(&img, &field, 1.0 / 9.0).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(out.get(x, y), 0);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let img = RawImage::filled(64, 64, 0).unwrap();
        assert!(gabor_response(&img, &OrientationField::uniform(64, 64, 16, 0.0), 0.0).is_err());
        assert!(gabor_response(&img, &OrientationField::uniform(32, 32, 16, 0.0), 0.1).is_err());
    }
}

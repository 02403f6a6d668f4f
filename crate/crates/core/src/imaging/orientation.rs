use std::f64::consts::PI;

use super::filters::{
    filter_cols, filter_rows, gaussian_blur, gaussian_derivative_kernel, gaussian_kernel,
};
use super::{RawImage, SegMask};
use crate::error::{Error, Result};

const GRADIENT_SIGMA: f64 = 1.0;

/// Block-sampled ridge orientation.
///
/// Angles are in image coordinates (x right, y down), measured from +x
/// towards +y, along the ridge direction, and folded into `[0, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub block_size: usize,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub theta: Vec<f64>,
    pub coherence: Vec<f64>,
    pub foreground: Vec<bool>,
}

impl OrientationField {
    /// A field with the same angle on every block, all blocks foreground.
    pub fn uniform(width: usize, height: usize, block_size: usize, theta: f64) -> Self {
        let blocks_x = width.div_ceil(block_size);
        let blocks_y = height.div_ceil(block_size);
        let n = blocks_x * blocks_y;
        Self {
            block_size,
            blocks_x,
            blocks_y,
            theta: vec![fold_angle(theta); n],
            coherence: vec![1.0; n],
            foreground: vec![true; n],
        }
    }

    #[inline]
    pub fn block_index(&self, x: usize, y: usize) -> usize {
        (y / self.block_size) * self.blocks_x + x / self.block_size
    }

    pub fn theta_at(&self, bx: usize, by: usize) -> f64 {
        self.theta[by * self.blocks_x + bx]
    }

    pub fn covers(&self, width: usize, height: usize) -> bool {
        self.blocks_x * self.block_size >= width
            && self.blocks_y * self.block_size >= height
            && self.theta.len() == self.blocks_x * self.blocks_y
    }
}

pub(crate) fn fold_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Structure-tensor orientation estimate.
///
/// Gradients come from Gaussian-derivative filters; their second moments are
/// smoothed with σ = `block_size / 2` and summed over each block. Coherence
/// is `(λ1 − λ2) / (λ1 + λ2)`. Blocks with less than half their pixels in
/// `mask` are background (coherence 0, angle 0).
pub fn estimate_orientation(
    img: &RawImage,
    mask: &SegMask,
    block_size: usize,
) -> Result<OrientationField> {
    if block_size < 4 {
        return Err(Error::Config(format!(
            "block_size must be >= 4, got {block_size}"
        )));
    }
    mask.check_shape(img)?;
    let (w, h) = (img.width(), img.height());
    let src = img.to_f64();

    let d = gaussian_derivative_kernel(GRADIENT_SIGMA);
    let g = gaussian_kernel(GRADIENT_SIGMA);
    let gx = filter_cols(&filter_rows(&src, w, h, &d), w, h, &g);
    let gy = filter_rows(&filter_cols(&src, w, h, &d), w, h, &g);

    let sigma = block_size as f64 / 2.0;
    let gxx: Vec<f64> = gx.iter().map(|v| v * v).collect();
    let gyy: Vec<f64> = gy.iter().map(|v| v * v).collect();
    let gxy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let gxx = gaussian_blur(&gxx, w, h, sigma);
    let gyy = gaussian_blur(&gyy, w, h, sigma);
    let gxy = gaussian_blur(&gxy, w, h, sigma);

    let blocks_x = w.div_ceil(block_size);
    let blocks_y = h.div_ceil(block_size);
    let n = blocks_x * blocks_y;
    let mut theta = vec![0.0; n];
    let mut coherence = vec![0.0; n];
    let mut foreground = vec![false; n];

    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let (x0, y0) = (bx * block_size, by * block_size);
            let (x1, y1) = ((x0 + block_size).min(w), (y0 + block_size).min(h));
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            let mut inside = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = y * w + x;
                    sxx += gxx[i];
                    syy += gyy[i];
                    sxy += gxy[i];
                    inside += usize::from(mask.get(x, y));
                }
            }
            let bi = by * blocks_x + bx;
            if 2 * inside < (x1 - x0) * (y1 - y0) {
                continue;
            }
            foreground[bi] = true;
            let trace = sxx + syy;
            let gap = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
            if trace <= 1e-12 || gap <= 1e-12 * trace {
                continue;
            }
            coherence[bi] = (gap / trace).clamp(0.0, 1.0);
            // dominant gradient direction; ridges run perpendicular to it
            let grad_dir = 0.5 * (2.0 * sxy).atan2(sxx - syy);
            theta[bi] = fold_angle(grad_dir - PI / 2.0);
        }
    }

    Ok(OrientationField {
        block_size,
        blocks_x,
        blocks_y,
        theta,
        coherence,
        foreground,
    })
}

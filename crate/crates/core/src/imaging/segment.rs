use super::{RawImage, SegMask};
use crate::error::Result;

/// Foreground segmentation.
///
/// An externally produced mask is passed through untouched after a shape
/// check. Otherwise each `block_size` block (edge blocks may be partial) is
/// marked foreground when its intensity variance exceeds
/// `variance_ratio × global variance`.
pub fn segment(
    img: &RawImage,
    external_mask: Option<&SegMask>,
    block_size: usize,
    variance_ratio: f64,
) -> Result<SegMask> {
    if let Some(mask) = external_mask {
        mask.check_shape(img)?;
        return Ok(mask.clone());
    }
    let (w, h) = (img.width(), img.height());
    let block_size = block_size.max(1);
    let threshold = variance_ratio * variance(img.pixels().iter().copied());

    let mut mask = SegMask::empty(w, h);
    for by in (0..h).step_by(block_size) {
        for bx in (0..w).step_by(block_size) {
            let (x1, y1) = ((bx + block_size).min(w), (by + block_size).min(h));
            let block = (by..y1).flat_map(|y| (bx..x1).map(move |x| (x, y)));
            let v = variance(block.clone().map(|(x, y)| img.get(x, y)));
            if v > threshold {
                for (x, y) in block {
                    mask.bits[y * w + x] = true;
                }
            }
        }
    }
    Ok(mask)
}

fn variance(values: impl Iterator<Item = u8> + Clone) -> f64 {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0f64), |(n, s), v| (n + 1, s + f64::from(v)));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n as f64
}

use super::filters::{integral_image, rect_sum};
use super::{RawImage, SegMask};
use crate::error::{Error, Result};

/// Mean/variance normalization.
///
/// Statistics are taken over the mask's foreground (the whole image when
/// `mask` is `None`); the affine map `target_mean + sqrt(target_var / var)
/// · (p − mean)` is applied to every pixel and clipped to `[0, 255]`.
/// A zero-variance input yields a constant image at `target_mean`.
pub fn normalize(
    img: &RawImage,
    mask: Option<&SegMask>,
    target_mean: f64,
    target_var: f64,
) -> Result<RawImage> {
    if let Some(m) = mask {
        m.check_shape(img)?;
    }
    let fg = |i: usize| mask.is_none_or(|m| m.bits()[i]);
    let px = img.pixels();
    let (n, sum) = (0..px.len())
        .filter(|&i| fg(i))
        .fold((0usize, 0.0), |(n, s), i| (n + 1, s + f64::from(px[i])));
    let to_u8 = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    if n == 0 {
        return RawImage::filled(img.width(), img.height(), to_u8(target_mean));
    }
    let mean = sum / n as f64;
    let var = (0..px.len())
        .filter(|&i| fg(i))
        .map(|i| (f64::from(px[i]) - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    if var <= f64::EPSILON {
        return RawImage::filled(img.width(), img.height(), to_u8(target_mean));
    }
    let gain = (target_var.max(0.0) / var).sqrt();
    let pixels = px
        .iter()
        .map(|&p| to_u8(target_mean + gain * (f64::from(p) - mean)))
        .collect();
    RawImage::new(img.width(), img.height(), pixels)
}

/// Local-mean binarization.
///
/// A pixel becomes 0 when it is below the mean of its `window`×`window`
/// neighbourhood (clipped at the image border) minus `offset`, else 255.
pub fn adaptive_threshold(img: &RawImage, window: usize, offset: f64) -> Result<RawImage> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Config(format!(
            "threshold window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let src = img.to_f64();
    let sat = integral_image(&src, w, h);
    let r = window / 2;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let mean = rect_sum(&sat, w, x0, y0, x1, y1) / ((x1 - x0) * (y1 - y0)) as f64;
            pixels.push(if src[y * w + x] < mean - offset {
                0
            } else {
                255
            });
        }
    }
    RawImage::new(w, h, pixels)
}

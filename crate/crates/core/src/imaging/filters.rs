//! Separable filtering helpers on `f64` planes (row-major, clamp-to-edge borders).

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Sampled first derivative of a Gaussian, normalized so that a unit ramp
/// yields a unit response.
pub(crate) fn gaussian_derivative_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let x = i as f64;
            -x * (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    // correlation with a ramp f(x) = x must give 1
    let norm: f64 = (-radius..=radius).zip(&k).map(|(i, v)| i as f64 * v).sum();
    k.iter_mut().for_each(|v| *v /= norm);
    k
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Correlates every row with `k` (kernel centered).
pub(crate) fn filter_rows(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * row[clamp_index(x as isize + j as isize - r, width)];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Correlates every column with `k` (kernel centered).
pub(crate) fn filter_cols(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for (j, kv) in k.iter().enumerate() {
            let sy = clamp_index(y as isize + j as isize - r, height);
            let src_row = &src[sy * width..(sy + 1) * width];
            let dst_row = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    out
}

pub(crate) fn gaussian_blur(src: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let tmp = filter_rows(src, width, height, &k);
    filter_cols(&tmp, width, height, &k)
}

/// Summed-area table with a zero row/column prepended: `(width+1)*(height+1)` entries.
pub(crate) fn integral_image(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let w1 = width + 1;
    let mut sat = vec![0.0; w1 * (height + 1)];
    for y in 0..height {
        let mut row_sum = 0.0;
        for x in 0..width {
            row_sum += src[y * width + x];
            sat[(y + 1) * w1 + x + 1] = sat[y * w1 + x + 1] + row_sum;
        }
    }
    sat
}

/// Sum over the half-open rectangle `[x0, x1) × [y0, y1)`.
#[inline]
pub(crate) fn rect_sum(
    sat: &[f64],
    width: usize,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
) -> f64 {
    let w1 = width + 1;
    sat[y1 * w1 + x1] - sat[y0 * w1 + x1] - sat[y1 * w1 + x0] + sat[y0 * w1 + x0]
}

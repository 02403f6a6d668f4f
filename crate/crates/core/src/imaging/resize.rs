use super::{ModelInput, RawImage};

/// Edge length of the encoder input.
pub const MODEL_INPUT_SIZE: usize = 224;

/// Bilinear resize to 224×224, scale to [0, 1], then `(x − 0.5) / 0.5`.
pub fn to_model_input(img: &RawImage) -> ModelInput {
    to_model_input_sized(img, MODEL_INPUT_SIZE)
}

/// As [`to_model_input`] with an arbitrary square output size.
pub fn to_model_input_sized(img: &RawImage, size: usize) -> ModelInput {
    assert!(size > 0, "model input size must be positive");
    let plane = resize_bilinear(img, size, size)
        .into_iter()
        .map(|v| ((v / 255.0 - 0.5) / 0.5) as f32)
        .collect();
    ModelInput::new(size, plane).expect("plane length matches size")
}

/// Half-pixel-centre bilinear sampling with edge clamping.
fn resize_bilinear(img: &RawImage, out_w: usize, out_h: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let taps = |dst: usize, scale: f64, n: usize| {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let (y0, y1, fy) = taps(oy, sy, h);
        for ox in 0..out_w {
            let (x0, x1, fx) = taps(ox, sx, w);
            let p = |x, y| f64::from(img.get(x, y));
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

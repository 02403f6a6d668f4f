//! Latent image preprocessing: segmentation, largest-region selection,
//! orientation-guided Gabor enhancement, normalization, adaptive
//! thresholding and conversion to the encoder's input tensor layout.
//!
//! Every function here is a pure function of its inputs.

mod components;
mod enhance;
pub(crate) mod filters;
mod gabor;
pub mod io;
mod orientation;
mod resize;
mod segment;

pub use components::largest_component;
pub use enhance::{adaptive_threshold, normalize};
pub use gabor::{gabor_enhance, gabor_kernel, gabor_response, GaborKernel};
pub use orientation::{estimate_orientation, OrientationField};
pub use resize::{to_model_input, to_model_input_sized, MODEL_INPUT_SIZE};
pub use segment::segment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted edge length for a raw image.
pub const MIN_IMAGE_EDGE: usize = 32;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_IMAGE_EDGE || height < MIN_IMAGE_EDGE {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} is smaller than the {MIN_IMAGE_EDGE}x{MIN_IMAGE_EDGE} minimum"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub(crate) fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }

    /// Zeroes every pixel outside the mask.
    pub fn apply_mask(&self, mask: &SegMask) -> Result<Self> {
        mask.check_shape(self)?;
        let pixels = self
            .pixels
            .iter()
            .zip(mask.bits())
            .map(|(&p, &m)| if m { p } else { 0 })
            .collect();
        Self::new(self.width, self.height, pixels)
    }
}

/// Binary foreground mask with the same grid as its source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Config(format!(
                "mask has {} bits, expected {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub(crate) fn check_shape(&self, img: &RawImage) -> Result<()> {
        if self.width != img.width || self.height != img.height {
            return Err(Error::Config(format!(
                "mask is {}x{} but image is {}x{}",
                self.width, self.height, img.width, img.height
            )));
        }
        Ok(())
    }
}

/// Encoder input: three identical `size`×`size` channels, values in [-1, 1].
///
/// Only one plane is stored; the channel replication is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    size: usize,
    plane: Vec<f32>,
}

impl ModelInput {
    pub const CHANNELS: usize = 3;

    pub fn new(size: usize, plane: Vec<f32>) -> Result<Self> {
        if size == 0 || plane.len() != size * size {
            return Err(Error::Shape(format!(
                "model input plane of length {} does not match {size}x{size}",
                plane.len()
            )));
        }
        Ok(Self { size, plane })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// The single grayscale plane shared by all channels.
    pub fn plane(&self) -> &[f32] {
        &self.plane
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        assert!(c < Self::CHANNELS, "channel {c} out of range");
        &self.plane
    }

    /// Channel-major `[3, size, size]` buffer.
    pub fn to_chw(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(Self::CHANNELS * self.plane.len());
        for _ in 0..Self::CHANNELS {
            out.extend_from_slice(&self.plane);
        }
        out
    }
}

/// Preprocessing parameters. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Block edge in pixels, shared by the fallback segmenter and the orientation field.
    pub block_size: usize,
    /// Gabor frequency in cycles per pixel.
    pub gabor_frequency: f64,
    pub threshold_window: usize,
    pub threshold_offset: f64,
    /// Segmenter threshold as a fraction of the global intensity variance.
    pub variance_threshold: f64,
    pub norm_mean: f64,
    pub norm_var: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            block_size: 16,
            gabor_frequency: 1.0 / 9.0,
            threshold_window: 15,
            threshold_offset: 2.0,
            variance_threshold: 0.1,
            norm_mean: 128.0,
            norm_var: 2500.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 4 {
            return Err(Error::Config(format!(
                "block_size must be >= 4, got {}",
                self.block_size
            )));
        }
        if !(self.gabor_frequency > 0.0 && self.gabor_frequency.is_finite()) {
            return Err(Error::Config(format!(
                "gabor_frequency must be positive, got {}",
                self.gabor_frequency
            )));
        }
        if self.threshold_window < 3 || self.threshold_window % 2 == 0 {
            return Err(Error::Config(format!(
                "threshold_window must be odd and >= 3, got {}",
                self.threshold_window
            )));
        }
        if !(self.variance_threshold >= 0.0 && self.variance_threshold.is_finite()) {
            return Err(Error::Config(
                "variance_threshold must be non-negative".into(),
            ));
        }
        if !self.threshold_offset.is_finite() || !self.norm_mean.is_finite() {
            return Err(Error::Config(
                "threshold_offset and norm_mean must be finite".into(),
            ));
        }
        if !(self.norm_var > 0.0 && self.norm_var.is_finite()) {
            return Err(Error::Config("norm_var must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`preprocess`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub enhanced: RawImage,
    pub mask: SegMask,
    pub field: OrientationField,
}

/// Runs the full enhancement chain:
/// segment → largest component → mask → Gabor → normalize → adaptive threshold.
///
/// The mask is re-applied after thresholding so background stays at 0.
pub fn preprocess(
    img: &RawImage,
    external_mask: Option<&SegMask>,
    cfg: &PreprocessConfig,
) -> Result<Preprocessed> {
    cfg.validate()?;
    let mask = segment(img, external_mask, cfg.block_size, cfg.variance_threshold)?;
    let mask = largest_component(&mask)?;
    let roi = img.apply_mask(&mask)?;
    let field = estimate_orientation(&roi, &mask, cfg.block_size)?;
    let enhanced = gabor_enhance(&roi, &field, cfg.gabor_frequency)?;
    let enhanced = normalize(&enhanced, Some(&mask), cfg.norm_mean, cfg.norm_var)?;
    let enhanced = adaptive_threshold(&enhanced, cfg.threshold_window, cfg.threshold_offset)?;
    let enhanced = enhanced.apply_mask(&mask)?;
    Ok(Preprocessed {
        enhanced,
        mask,
        field,
    })
}

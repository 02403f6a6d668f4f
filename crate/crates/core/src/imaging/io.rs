//! Image and mask file I/O.

use std::path::Path;

use super::{RawImage, SegMask};
use crate::error::{Error, Result};

/// Decodes PNG/TIFF/BMP bytes to 8-bit grayscale.
pub fn decode_image(bytes: &[u8]) -> Result<RawImage> {
    let img = image::load_from_memory(bytes)?.into_luma8();
    let (w, h) = img.dimensions();
    RawImage::new(w as usize, h as usize, img.into_raw())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes a mask image; any nonzero pixel is foreground.
pub fn decode_mask(bytes: &[u8]) -> Result<SegMask> {
    let img = image::load_from_memory(bytes)?.into_luma8();
    let (w, h) = img.dimensions();
    SegMask::new(
        w as usize,
        h as usize,
        img.pixels().map(|p| p.0[0] != 0).collect(),
    )
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SegMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes)
}

pub fn save_png(img: &RawImage, path: impl AsRef<Path>) -> Result<()> {
    let buf = image::GrayImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .expect("buffer length matches dimensions");
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RawImage::from_fn(37, 41, |x, y| (x * 3 + y * 5) as u8).unwrap();
        let p = dir.path().join("a.png");
        save_png(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
        let mask = load_mask(&p).unwrap();
        assert_eq!(
            mask.count(),
            img.pixels().iter().filter(|&&v| v != 0).count()
        );
    }

    #[test]
    fn garbage_bytes_error() {
        assert!(decode_image(b"not an image").is_err());
    }
}

//! 16-bit grayscale PNG export/import for viewing. PNG carries raw
//! quantized values without the physical range; the PGM alongside it is
//! the bit-exact reference.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::img::IntensityImage;

use super::FormatError;

pub fn write_image_png(path: &Path, img: &IntensityImage) -> Result<(), FormatError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, v) in img.iter_valid() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let buffer = ImageBuffer::from_fn(img.width(), img.height(), |x, y| {
        let q = match img.get(x, y) {
            Some(v) => 1 + (((v - lo) / span) * 65534.0).round() as u16,
            None => 0u16,
        };
        Luma([q])
    });
    buffer
        .save(path)
        .map_err(|e| FormatError::structure(path, format!("png encode failed: {e}")))
}

/// Reads a 16-bit grayscale PNG back as raw quantized values (0 stays
/// invalid). Physical units are not recoverable from PNG.
pub fn read_image_png(path: &Path) -> Result<IntensityImage, FormatError> {
    let dynamic = image::open(path)
        .map_err(|e| FormatError::structure(path, format!("png decode failed: {e}")))?;
    let gray = dynamic.to_luma16();
    let mut img = IntensityImage::new(gray.width(), gray.height())?;
    for (x, y, pixel) in gray.enumerate_pixels() {
        if pixel[0] > 0 {
            img.set(x, y, pixel[0] as f64);
        }
    }
    Ok(img)
}

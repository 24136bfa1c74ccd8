//! Scalar 2D images with a per-pixel validity flag. NIR renders carry
//! arbitrary radiometric units, depth renders carry millimeters.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be non-zero, got {0}x{1}")]
    EmptyDimensions(u32, u32),
    #[error("pixel data length {len} does not match {width}x{height}")]
    DataLengthMismatch { len: usize, width: u32, height: u32 },
    #[error("pixel ({0}, {1}) is negative or non-finite: {2}")]
    InvalidPixelValue(u32, u32, f64),
}

/// Row-major scalar image. Invalid pixels (e.g. depth rays that hit
/// nothing) keep a value of 0 and a cleared validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl IntensityImage {
    /// All-invalid image of the given size.
    pub fn new(width: u32, height: u32) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions(width, height));
        }
        let n = width as usize * height as usize;
        Ok(Self {
            width,
            height,
            values: vec![0.0; n],
            valid: vec![false; n],
        })
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions(width, height));
        }
        if values.len() != width as usize * height as usize {
            return Err(ImageError::DataLengthMismatch {
                len: values.len(),
                width,
                height,
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                let x = (i % width as usize) as u32;
                let y = (i / width as usize) as u32;
                return Err(ImageError::InvalidPixelValue(x, y, v));
            }
        }
        let n = values.len();
        Ok(Self {
            width,
            height,
            values,
            valid: vec![true; n],
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        let i = self.idx(x, y);
        if self.valid[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        debug_assert!(value.is_finite() && value >= 0.0);
        let i = self.idx(x, y);
        self.values[i] = value;
        self.valid[i] = true;
    }

    #[inline]
    pub fn clear(&mut self, x: u32, y: u32) {
        let i = self.idx(x, y);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Iterates `(x, y, value)` over valid pixels in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| self.get(x, y).map(|v| (x, y, v)))
        })
    }

    /// Mean of the values at the given pixel coordinates; `None` if any
    /// coordinate is invalid or the set is empty.
    pub fn region_mean(&self, pixels: &[(u32, u32)]) -> Option<f64> {
        if pixels.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        for &(x, y) in pixels {
            sum += self.get(x, y)?;
        }
        Some(sum / pixels.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_pixel() {
        let r = IntensityImage::from_values(2, 1, vec![1.0, -0.5]);
        assert!(matches!(r, Err(ImageError::InvalidPixelValue(1, 0, _))));
    }

    #[test]
    fn invalid_pixels_read_as_none() {
        let mut img = IntensityImage::new(2, 2).unwrap();
        img.set(0, 0, 3.5);
        assert_eq!(img.get(0, 0), Some(3.5));
        assert_eq!(img.get(1, 1), None);
        img.clear(0, 0);
        assert_eq!(img.get(0, 0), None);
    }

    #[test]
    fn region_mean_requires_valid_pixels() {
        let mut img = IntensityImage::new(2, 1).unwrap();
        img.set(0, 0, 4.0);
        assert_eq!(img.region_mean(&[(0, 0)]), Some(4.0));
        assert_eq!(img.region_mean(&[(0, 0), (1, 0)]), None);
        assert_eq!(img.region_mean(&[]), None);
    }
}

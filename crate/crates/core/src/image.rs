//! Per-pixel scalar maps and 8-bit grayscale output images.

use crate::error::{Error, Result};
use crate::geometry::rot90;

/// Row-major per-pixel scalar values; `None` marks pixels without a value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    width: usize,
    height: usize,
    values: Vec<Option<f64>>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Config(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.width + j]
    }

    pub fn rot90(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            values: rot90(&self.values, self.width, self.height),
        }
    }

    /// Maps every value through `f`, producing a grayscale image where
    /// pixels without a value (or where `f` returns `None`) are 0 and invalid.
    pub fn map_gray(&self, f: impl Fn(f64) -> Option<u8>) -> GrayImage {
        let mut pixels = Vec::with_capacity(self.values.len());
        let mut valid = Vec::with_capacity(self.values.len());
        for v in &self.values {
            match v.and_then(&f) {
                Some(g) => {
                    pixels.push(g);
                    valid.push(true);
                }
                None => {
                    pixels.push(0);
                    valid.push(false);
                }
            }
        }
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
            valid,
        }
    }
}

/// 8-bit grayscale image with a per-pixel validity flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    valid: Vec<bool>,
}

impl GrayImage {
    /// Image where every pixel is valid.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Config(format!(
                "expected {} pixels for a {width}x{height} image, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            valid: vec![true; pixels.len()],
            pixels,
        })
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

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.pixels[i * self.width + j]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.width + j]
    }

    pub fn rot90(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            pixels: rot90(&self.pixels, self.width, self.height),
            valid: rot90(&self.valid, self.width, self.height),
        }
    }
}

/// Checks a color depth and returns the largest gray level `2^b - 1`.
pub fn max_level(bits: u32) -> Result<f64> {
    if !(1..=8).contains(&bits) {
        return Err(Error::Config(format!(
            "color depth must be between 1 and 8 bits, got {bits}"
        )));
    }
    Ok(((1u32 << bits) - 1) as f64)
}

/// `floor(max_level * t)` for `t` in `[0, 1]`; values outside are clamped.
#[inline]
pub fn quantize_unit(t: f64, max_level: f64) -> u8 {
    (max_level * t.clamp(0.0, 1.0)).floor() as u8
}

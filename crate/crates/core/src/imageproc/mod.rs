//! Radiograph preprocessing: histogram equalization, Canny edges, hand-mask
//! extraction, masking and training-time augmentation.

mod augment;
mod canny;
mod equalize;
mod geometry;
mod mask;

pub use augment::{augment, AugmentParams};
pub use canny::{canny, canny_auto, gradient_magnitude, CannyParams};
pub use equalize::{equalization_lut, histogram_equalize};
pub use geometry::{
    crop, crop_mask, mirror_horizontal, mirror_mask, resize_bilinear, resize_nearest_mask,
    rotate_bilinear, rotate_nearest_mask,
};
pub use mask::{apply_mask, close3x3, fill_holes, largest_component_mask, label_components};

use crate::error::{Error, Result};

/// Hand mask of a radiograph: equalize, detect edges, keep the largest closed
/// region.
pub fn hand_mask(img: &GrayImage, params: &CannyParams) -> Result<BinaryMask> {
    let equalized = histogram_equalize(img);
    let edges = canny_auto(&equalized, params)?;
    largest_component_mask(&edges, img)
}

/// The radiograph with everything outside its hand mask zeroed, and the mask.
pub fn segment_hand(img: &GrayImage, params: &CannyParams) -> Result<(GrayImage, BinaryMask)> {
    let mask = hand_mask(img, params)?;
    Ok((apply_mask(img, &mask)?, mask))
}

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image", "dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(
                "image",
                format!("{width}x{height} image needs {} pixels, got {}", width * height, pixels.len()),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::filled(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                img.pixels[y * width + x] = f(x, y);
            }
        }
        img
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

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Intensities scaled to `[0, 1]`.
    pub fn to_unit_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

/// Per-pixel foreground flags (`true` = hand).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::invalid(
                "mask",
                format!("{width}x{height} mask with {} entries", bits.len()),
            ));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let mut m = Self::empty(width, height);
        m.bits.fill(true);
        m
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
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

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, img: &GrayImage) -> bool {
        self.width == img.width && self.height == img.height
    }

    /// Foreground 255, background 0.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    /// Pixels with intensity >= 128 are foreground.
    pub fn from_image(img: &GrayImage) -> Self {
        BinaryMask {
            width: img.width,
            height: img.height,
            bits: img.pixels.iter().map(|&p| p >= 128).collect(),
        }
    }

    /// Intersection over union with another mask of equal size.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::invalid("rgb image", "dimension mismatch"));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

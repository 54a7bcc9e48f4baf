use rand::Rng;

use super::geometry::{
    crop, crop_mask, mirror_horizontal, mirror_mask, resize_bilinear, resize_nearest_mask,
    rotate_bilinear, rotate_nearest_mask,
};
use super::{BinaryMask, GrayImage};
use crate::error::{Error, Result};

/// Ranges for the random crop / rotation / mirror / resize augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentParams {
    /// Crop side length as a fraction of the source side, drawn uniformly.
    pub crop_min: f64,
    pub crop_max: f64,
    /// Rotation angle drawn uniformly from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    pub mirror_prob: f64,
    pub output_width: usize,
    pub output_height: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            crop_min: 0.85,
            crop_max: 1.0,
            rotation_deg: 20.0,
            mirror_prob: 0.5,
            output_width: 64,
            output_height: 64,
        }
    }
}

impl AugmentParams {
    /// Parameters that only resize.
    pub fn identity(output_width: usize, output_height: usize) -> Self {
        AugmentParams {
            crop_min: 1.0,
            crop_max: 1.0,
            rotation_deg: 0.0,
            mirror_prob: 0.0,
            output_width,
            output_height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_crop = self.crop_min > 0.0 && self.crop_min <= self.crop_max && self.crop_max <= 1.0;
        if !ok_crop {
            return Err(Error::invalid(
                "augment",
                format!("crop fractions must satisfy 0 < min <= max <= 1, got {}..{}", self.crop_min, self.crop_max),
            ));
        }
        if !(0.0..=1.0).contains(&self.mirror_prob) {
            return Err(Error::invalid("augment", "mirror probability must be in [0, 1]"));
        }
        if !(self.rotation_deg >= 0.0 && self.rotation_deg.is_finite()) {
            return Err(Error::invalid("augment", "rotation range must be finite and >= 0"));
        }
        if self.output_width == 0 || self.output_height == 0 {
            return Err(Error::invalid("augment", "output size must be positive"));
        }
        Ok(())
    }
}

/// Apply one random crop, rotation, mirror and resize identically to an image and
/// its mask. Draws exactly five values from `rng`, in a fixed order.
pub fn augment<R: Rng + ?Sized>(
    img: &GrayImage,
    mask: &BinaryMask,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<(GrayImage, BinaryMask)> {
    params.validate()?;
    if !mask.same_dims(img) {
        return Err(Error::shape(
            "augment",
            &[img.height(), img.width()],
            &[mask.height(), mask.width()],
        ));
    }
    let (w, h) = (img.width(), img.height());
    let u_crop: f64 = rng.random();
    let u_x: f64 = rng.random();
    let u_y: f64 = rng.random();
    let u_rot: f64 = rng.random();
    let u_mirror: f64 = rng.random();

    let frac = params.crop_min + (params.crop_max - params.crop_min) * u_crop;
    let cw = ((frac * w as f64).round() as usize).clamp(1, w);
    let ch = ((frac * h as f64).round() as usize).clamp(1, h);
    let x0 = ((u_x * (w - cw + 1) as f64) as usize).min(w - cw);
    let y0 = ((u_y * (h - ch + 1) as f64) as usize).min(h - ch);
    let mut out_img = crop(img, x0, y0, cw, ch)?;
    let mut out_mask = crop_mask(mask, x0, y0, cw, ch)?;

    let angle = params.rotation_deg * (2.0 * u_rot - 1.0);
    if angle != 0.0 {
        out_img = rotate_bilinear(&out_img, angle);
        out_mask = rotate_nearest_mask(&out_mask, angle);
    }
    if u_mirror < params.mirror_prob {
        out_img = mirror_horizontal(&out_img);
        out_mask = mirror_mask(&out_mask);
    }
    let out_img = resize_bilinear(&out_img, params.output_width, params.output_height)?;
    let out_mask = resize_nearest_mask(&out_mask, params.output_width, params.output_height)?;
    Ok((out_img, out_mask))
}

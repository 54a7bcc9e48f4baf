use super::{BinaryMask, GrayImage};
use crate::error::{Error, Result};
use crate::tensor::corner_aligned_taps;

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Corner-aligned bilinear resize, rounded to 8 bits.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize_bilinear", "output size must be positive"));
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let xs = corner_aligned_taps(img.width(), out_w);
    let ys = corner_aligned_taps(img.height(), out_h);
    let px = |x: usize, y: usize| img.get(x, y) as f64;
    Ok(GrayImage::from_fn(out_w, out_h, |ox, oy| {
        let (x0, x1, wx) = xs[ox];
        let (y0, y1, wy) = ys[oy];
        let top = px(x0, y0) * (1.0 - wx) + px(x1, y0) * wx;
        let bot = px(x0, y1) * (1.0 - wx) + px(x1, y1) * wx;
        to_u8(top * (1.0 - wy) + bot * wy)
    }))
}

fn nearest_index(o: usize, input: usize, output: usize) -> usize {
    if output == 1 || input == 1 {
        0
    } else {
        ((o as f64 * (input - 1) as f64 / (output - 1) as f64).round() as usize).min(input - 1)
    }
}

/// Corner-aligned nearest-neighbour resize, keeping the mask binary.
pub fn resize_nearest_mask(mask: &BinaryMask, out_w: usize, out_h: usize) -> Result<BinaryMask> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize_nearest_mask", "output size must be positive"));
    }
    let (w, h) = (mask.width(), mask.height());
    Ok(BinaryMask::from_fn(out_w, out_h, |ox, oy| {
        mask.get(nearest_index(ox, w, out_w), nearest_index(oy, h, out_h))
    }))
}

fn check_window(w: usize, h: usize, x0: usize, y0: usize, cw: usize, ch: usize) -> Result<()> {
    if cw == 0 || ch == 0 || x0 + cw > w || y0 + ch > h {
        return Err(Error::invalid(
            "crop",
            format!("window {cw}x{ch}+{x0}+{y0} outside {w}x{h}"),
        ));
    }
    Ok(())
}

pub fn crop(img: &GrayImage, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
    check_window(img.width(), img.height(), x0, y0, w, h)?;
    Ok(GrayImage::from_fn(w, h, |x, y| img.get(x0 + x, y0 + y)))
}

pub fn crop_mask(mask: &BinaryMask, x0: usize, y0: usize, w: usize, h: usize) -> Result<BinaryMask> {
    check_window(mask.width(), mask.height(), x0, y0, w, h)?;
    Ok(BinaryMask::from_fn(w, h, |x, y| mask.get(x0 + x, y0 + y)))
}

pub fn mirror_horizontal(img: &GrayImage) -> GrayImage {
    let w = img.width();
    GrayImage::from_fn(w, img.height(), |x, y| img.get(w - 1 - x, y))
}

pub fn mirror_mask(mask: &BinaryMask) -> BinaryMask {
    let w = mask.width();
    BinaryMask::from_fn(w, mask.height(), |x, y| mask.get(w - 1 - x, y))
}

/// Source coordinate of output pixel `(x, y)` under a rotation by `degrees` about the
/// raster centre (positive turns +x towards +y, i.e. clockwise on screen).
fn rotation_source(w: usize, h: usize, degrees: f64) -> impl Fn(usize, usize) -> (f64, f64) {
    let (s, c) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    move |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        (c * dx + s * dy + cx, -s * dx + c * dy + cy)
    }
}

/// Rotation with bilinear sampling; samples falling outside the source are 0.
pub fn rotate_bilinear(img: &GrayImage, degrees: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let src = rotation_source(w, h, degrees);
    GrayImage::from_fn(w, h, |x, y| {
        let (sx, sy) = src(x, y);
        if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
            return 0;
        }
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (wx, wy) = (sx - x0 as f64, sy - y0 as f64);
        let p = |x: usize, y: usize| img.get(x, y) as f64;
        let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
        let bot = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
        to_u8(top * (1.0 - wy) + bot * wy)
    })
}

/// Rotation with nearest-neighbour sampling; the same geometry as
/// [`rotate_bilinear`].
pub fn rotate_nearest_mask(mask: &BinaryMask, degrees: f64) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let src = rotation_source(w, h, degrees);
    BinaryMask::from_fn(w, h, |x, y| {
        let (sx, sy) = src(x, y);
        let (rx, ry) = (sx.round(), sy.round());
        if rx < 0.0 || ry < 0.0 || rx > (w - 1) as f64 || ry > (h - 1) as f64 {
            return false;
        }
        mask.get(rx as usize, ry as usize)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_examples() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 40 + y * 7) as u8);
        assert_eq!(resize_bilinear(&img, 5, 4).unwrap(), img);
        let c = GrayImage::filled(3, 7, 91);
        let r = resize_bilinear(&c, 11, 2).unwrap();
        assert!(r.pixels().iter().all(|&p| p == 91));
        let step = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        assert_eq!(resize_bilinear(&step, 4, 1).unwrap().pixels(), &[0, 85, 170, 255]);
        assert!(resize_bilinear(&step, 0, 1).is_err());
    }

    #[test]
    fn mirror_is_an_involution() {
        let img = GrayImage::from_fn(7, 3, |x, y| (x * 13 + y * 50) as u8);
        assert_ne!(mirror_horizontal(&img), img);
        assert_eq!(mirror_horizontal(&mirror_horizontal(&img)), img);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = GrayImage::from_fn(9, 6, |x, y| (x * 20 + y * 3) as u8);
        assert_eq!(rotate_bilinear(&img, 0.0), img);
        let m = BinaryMask::from_fn(9, 6, |x, y| x > y);
        assert_eq!(rotate_nearest_mask(&m, 0.0), m);
    }

    #[test]
    fn quarter_turn_moves_pixels() {
        let mut img = GrayImage::filled(5, 5, 0);
        img.set(4, 2, 200);
        // a +90° turn maps the right-middle pixel to the bottom-middle
        let r = rotate_bilinear(&img, 90.0);
        assert_eq!(r.get(2, 4), 200);
        let mut m = BinaryMask::empty(5, 5);
        m.set(4, 2, true);
        assert!(rotate_nearest_mask(&m, 90.0).get(2, 4));
    }

    #[test]
    fn crop_checks_window() {
        let img = GrayImage::from_fn(6, 4, |x, y| (x + 10 * y) as u8);
        let c = crop(&img, 2, 1, 3, 2).unwrap();
        assert_eq!(c.pixels(), &[12, 13, 14, 22, 23, 24]);
        assert!(crop(&img, 4, 0, 3, 1).is_err());
    }
}

use std::collections::VecDeque;

use super::{BinaryMask, GrayImage};
use crate::error::{Error, Result};

/// Canny settings with thresholds relative to the image's maximum gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CannyParams {
    pub sigma: f64,
    /// Low hysteresis threshold as a fraction of the maximum gradient magnitude.
    pub low: f64,
    /// High hysteresis threshold as a fraction of the maximum gradient magnitude.
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn blur(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let src: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    if sigma <= 0.0 {
        return src;
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src[y * w + clamp(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Gaussian-blurred Sobel gradients: `(magnitude, gx, gy)`, row-major.
pub fn gradient_magnitude(img: &GrayImage, sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let b = blur(img, sigma);
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        b[yc * w + xc]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = dx.hypot(dy);
        }
    }
    (mag, gx, gy)
}

/// Canny edge detection with absolute gradient thresholds `0 < low <= high`.
pub fn canny(img: &GrayImage, sigma: f64, low: f64, high: f64) -> Result<BinaryMask> {
    if !(low > 0.0 && low <= high) {
        return Err(Error::invalid(
            "canny",
            format!("thresholds must satisfy 0 < low <= high, got low={low} high={high}"),
        ));
    }
    let (mag, gx, gy) = gradient_magnitude(img, sigma);
    Ok(edges_from_gradients(img.width(), img.height(), &mag, &gx, &gy, low, high))
}

/// Canny with thresholds scaled by the maximum gradient magnitude. A flat image
/// yields no edges.
pub fn canny_auto(img: &GrayImage, params: &CannyParams) -> Result<BinaryMask> {
    if !(params.low > 0.0 && params.low <= params.high) {
        return Err(Error::invalid(
            "canny",
            format!(
                "relative thresholds must satisfy 0 < low <= high, got low={} high={}",
                params.low, params.high
            ),
        ));
    }
    let (mag, gx, gy) = gradient_magnitude(img, params.sigma);
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(BinaryMask::empty(img.width(), img.height()));
    }
    Ok(edges_from_gradients(
        img.width(),
        img.height(),
        &mag,
        &gx,
        &gy,
        params.low * max,
        params.high * max,
    ))
}

fn edges_from_gradients(
    w: usize,
    h: usize,
    mag: &[f64],
    gx: &[f64],
    gy: &[f64],
    low: f64,
    high: f64,
) -> BinaryMask {
    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // Non-maximum suppression along the gradient quantized to 4 directions. A pixel
    // must strictly beat its backward neighbour and at least tie its forward one,
    // so plateaus two pixels wide keep a single pixel.
    let mut thin = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = mag[i];
            if v <= 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            if v > m(xi - dx, yi - dy) && v >= m(xi + dx, yi + dy) {
                thin[i] = v;
            }
        }
    }

    let mut edges = BinaryMask::empty(w, h);
    let mut queue = VecDeque::new();
    for (i, &v) in thin.iter().enumerate() {
        if v >= high {
            edges.set(i % w, i / w, true);
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let j = ny * w + nx;
                if !edges.get(nx, ny) && thin[j] >= low {
                    edges.set(nx, ny, true);
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}

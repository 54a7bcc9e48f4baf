use super::layers::AttentionCapture;
use crate::error::{Error, Result};
use crate::imageproc::RgbImage;
use crate::tensor::Scalar;

/// Entry `i` of a 256-step blue-to-red ("jet") colour table.
pub fn jet(i: u8) -> [u8; 3] {
    let t = i as f64 / 255.0;
    let ch = |centre: f64| {
        let v = (1.5 - (4.0 * t - centre).abs()).clamp(0.0, 1.0);
        (v * 255.0).round() as u8
    };
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Colour-table index of each pixel: channel mean, min-max normalized. A constant
/// map sits at mid-scale (128).
pub fn heatmap_indices<T: Scalar>(capture: &AttentionCapture<T>, sample: usize) -> Result<Vec<u8>> {
    let shape = capture.logits.shape();
    let &[n, c, h, w] = shape else {
        return Err(Error::invalid("export_heatmap", format!("capture has shape {shape:?}")));
    };
    if sample >= n || c == 0 {
        return Err(Error::invalid(
            "export_heatmap",
            format!("sample {sample} out of range for shape {shape:?}"),
        ));
    }
    let hw = h * w;
    let data = capture.logits.data();
    let base = sample * c * hw;
    let mean: Vec<f64> = (0..hw)
        .map(|i| (0..c).map(|ch| data[base + ch * hw + i].as_f64()).sum::<f64>() / c as f64)
        .collect();
    let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(mean
        .iter()
        .map(|&v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect())
}

/// Heatmap of the first sample of a capture.
pub fn export_heatmap<T: Scalar>(capture: &AttentionCapture<T>) -> Result<RgbImage> {
    export_heatmap_for(capture, 0)
}

pub fn export_heatmap_for<T: Scalar>(capture: &AttentionCapture<T>, sample: usize) -> Result<RgbImage> {
    let idx = heatmap_indices(capture, sample)?;
    RgbImage::new(
        capture.width(),
        capture.height(),
        idx.into_iter().map(jet).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn capture(c: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> AttentionCapture<f32> {
        let mut v = Vec::new();
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    v.push(f(ch, y, x));
                }
            }
        }
        AttentionCapture {
            module: "Att1_1".into(),
            logits: Tensor::from_f64(&[1, c, h, w], &v).unwrap(),
        }
    }

    #[test]
    fn constant_map_is_mid_colour() {
        let img = export_heatmap(&capture(3, 4, 5, |_, _, _| -2.0)).unwrap();
        assert_eq!((img.width(), img.height()), (5, 4));
        assert!(img.pixels().iter().all(|&p| p == jet(128)));
    }

    #[test]
    fn single_hot_pixel() {
        let img = export_heatmap(&capture(2, 6, 6, |_, y, x| if (x, y) == (4, 1) { 3.0 } else { 0.0 })).unwrap();
        let hot: Vec<usize> = (0..36).filter(|&i| img.pixels()[i] == jet(255)).collect();
        assert_eq!(hot, [6 + 4]);
    }

    #[test]
    fn table_runs_blue_to_red() {
        let (first, last) = (jet(0), jet(255));
        assert!(first[2] > first[0]);
        assert!(last[0] > last[2]);
        let distinct: std::collections::HashSet<[u8; 3]> = (0..=255).map(jet).collect();
        assert!(distinct.len() > 200);
    }
}

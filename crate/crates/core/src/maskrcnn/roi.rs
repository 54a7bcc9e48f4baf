use crate::error::{Error, Result};
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

pub const DEFAULT_SAMPLES_PER_BIN: usize = 2;

/// Axis-aligned box in feature-map coordinates. Feature pixel `(i, j)` covers the
/// unit square `[j, j+1) x [i, i+1)`, so its centre sits at `(j + 0.5, i + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoiBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl RoiBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = RoiBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        if !finite || self.x2 < self.x1 || self.y2 < self.y1 {
            return Err(Error::invalid("roi_box", format!("invalid box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }
}

/// Bilinear taps `(flat index, weight)` of one sample, coordinates clamped to the map.
fn bilinear_taps(h: usize, w: usize, y: f64, x: f64, out: &mut Vec<(usize, f64)>) {
    let y = (y - 0.5).clamp(0.0, (h - 1) as f64);
    let x = (x - 0.5).clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ly, lx) = (y - y0 as f64, x - x0 as f64);
    out.push((y0 * w + x0, (1.0 - ly) * (1.0 - lx)));
    out.push((y0 * w + x1, (1.0 - ly) * lx));
    out.push((y1 * w + x0, ly * (1.0 - lx)));
    out.push((y1 * w + x1, ly * lx));
}

/// For each output bin, the taps of all its samples with weights already divided
/// by the sample count.
fn bin_taps(
    h: usize,
    w: usize,
    roi: &RoiBox,
    out_h: usize,
    out_w: usize,
    samples: usize,
) -> Vec<Vec<(usize, f64)>> {
    let bin_h = roi.height() / out_h as f64;
    let bin_w = roi.width() / out_w as f64;
    let norm = 1.0 / (samples * samples) as f64;
    let mut bins = Vec::with_capacity(out_h * out_w);
    for ph in 0..out_h {
        for pw in 0..out_w {
            let mut taps = Vec::with_capacity(4 * samples * samples);
            for iy in 0..samples {
                let y = roi.y1 + ph as f64 * bin_h + (iy as f64 + 0.5) * bin_h / samples as f64;
                for ix in 0..samples {
                    let x =
                        roi.x1 + pw as f64 * bin_w + (ix as f64 + 0.5) * bin_w / samples as f64;
                    bilinear_taps(h, w, y, x, &mut taps);
                }
            }
            taps.iter_mut().for_each(|t| t.1 *= norm);
            bins.push(taps);
        }
    }
    bins
}

struct RoiAlignBackward {
    bins: Vec<Vec<(usize, f64)>>,
    c: usize,
    hw: usize,
}

impl<T: Scalar> Backward<T> for RoiAlignBackward {
    fn op_name(&self) -> &'static str {
        "roi_align"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let mut gx = Tensor::zeros(inputs[0].shape());
        let g = grad.data();
        let nb = self.bins.len();
        let data = gx.data_mut();
        for ch in 0..self.c {
            let plane = &mut data[ch * self.hw..(ch + 1) * self.hw];
            for (b, taps) in self.bins.iter().enumerate() {
                let gb = g[ch * nb + b];
                for &(i, wt) in taps {
                    plane[i] += gb * T::from_f64(wt);
                }
            }
        }
        vec![Some(gx)]
    }
}

/// RoIAlign over a `[C, H, W]` feature map: each of the `out_h x out_w` bins
/// averages `samples_per_bin²` bilinear samples on a regular grid inside it.
/// Samples outside the map are clamped to its border; a zero-area box samples
/// its collapsed point.
pub fn roi_align<T: Scalar>(
    tape: &mut Tape<T>,
    feat: Var,
    roi: &RoiBox,
    out_h: usize,
    out_w: usize,
    samples_per_bin: usize,
) -> Result<Var> {
    roi.validate()?;
    let &[c, h, w] = tape.shape(feat) else {
        return Err(Error::invalid(
            "roi_align",
            format!("expected a [C, H, W] feature map, got {:?}", tape.shape(feat)),
        ));
    };
    if c == 0 || h == 0 || w == 0 || out_h == 0 || out_w == 0 || samples_per_bin == 0 {
        return Err(Error::invalid(
            "roi_align",
            "feature map, output size and samples per bin must be non-empty",
        ));
    }
    let bins = bin_taps(h, w, roi, out_h, out_w, samples_per_bin);
    let x = tape.value(feat).data();
    let hw = h * w;
    let mut out = Vec::with_capacity(c * bins.len());
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for taps in &bins {
            let v: f64 = taps.iter().map(|&(i, wt)| plane[i].as_f64() * wt).sum();
            out.push(T::from_f64(v));
        }
    }
    let value = Tensor::new(&[c, out_h, out_w], out)?;
    Ok(tape.record(value, vec![feat], Box::new(RoiAlignBackward { bins, c, hw })))
}

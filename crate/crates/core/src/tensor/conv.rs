//! Spatial operations on NCHW feature maps.

use super::{Backward, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

fn dims4(op: &'static str, shape: &[usize]) -> Result<[usize; 4]> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::invalid(op, format!("expected NCHW tensor, got {shape:?}"))),
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(g: &ConvGeom, col: &[T], dx: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            line[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

struct Conv2dBackward<T> {
    geom: ConvGeom,
    n: usize,
    f: usize,
    /// im2col buffers per sample; `None` for 1x1/stride-1 convolutions, which read
    /// the input directly.
    cols: Option<Vec<T>>,
}

impl<T: Scalar> Backward<T> for Conv2dBackward<T> {
    fn op_name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let g = &self.geom;
        let (rows, cols, f) = (g.rows(), g.cols(), self.f);
        let (x, w) = (inputs[0], inputs[1]);
        let (one, zero) = (T::one(), T::zero());
        let in_plane = g.c * g.h * g.w;
        let mut gx = needs[0].then(|| Tensor::<T>::zeros(x.shape()));
        let mut gw = needs[1].then(|| Tensor::<T>::zeros(w.shape()));
        let mut scratch = if needs[0] && self.cols.is_some() {
            vec![zero; rows * cols]
        } else {
            Vec::new()
        };
        for s in 0..self.n {
            let gs = &grad.data()[s * f * cols..(s + 1) * f * cols];
            let col: &[T] = match &self.cols {
                Some(all) => &all[s * rows * cols..(s + 1) * rows * cols],
                None => &x.data()[s * in_plane..(s + 1) * in_plane],
            };
            if let Some(gw) = gw.as_mut() {
                T::gemm(
                    f,
                    cols,
                    rows,
                    one,
                    gs,
                    (cols as isize, 1),
                    col,
                    (1, cols as isize),
                    one,
                    gw.data_mut(),
                    (rows as isize, 1),
                );
            }
            if let Some(gx) = gx.as_mut() {
                let dst = &mut gx.data_mut()[s * in_plane..(s + 1) * in_plane];
                let target: &mut [T] = if self.cols.is_some() {
                    &mut scratch
                } else {
                    dst
                };
                T::gemm(
                    rows,
                    f,
                    cols,
                    one,
                    w.data(),
                    (1, rows as isize),
                    gs,
                    (cols as isize, 1),
                    zero,
                    target,
                    (cols as isize, 1),
                );
                if self.cols.is_some() {
                    let dst = &mut gx.data_mut()[s * in_plane..(s + 1) * in_plane];
                    col2im(g, &scratch, dst);
                }
            }
        }
        let mut out = vec![gx, gw];
        if inputs.len() == 3 {
            out.push(needs[2].then(|| {
                let mut gb = vec![zero; f];
                for s in 0..self.n {
                    for (fi, acc) in gb.iter_mut().enumerate() {
                        let start = (s * f + fi) * cols;
                        *acc += grad.data()[start..start + cols].iter().copied().sum::<T>();
                    }
                }
                Tensor::new(&[f], gb).expect("shape")
            }));
        }
        out
    }
}

struct MaxPoolBackward {
    argmax: Vec<usize>,
}

impl<T: Scalar> Backward<T> for MaxPoolBackward {
    fn op_name(&self) -> &'static str {
        "maxpool2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let mut gx = Tensor::zeros(inputs[0].shape());
        let d = gx.data_mut();
        for (&g, &j) in grad.data().iter().zip(&self.argmax) {
            d[j] += g;
        }
        vec![Some(gx)]
    }
}

/// Corner-aligned sampling table for one axis: `(low index, high index, weight of high)`.
pub(crate) fn corner_aligned_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|o| {
            let src = if output == 1 || input == 1 {
                0.0
            } else {
                o as f64 * (input - 1) as f64 / (output - 1) as f64
            };
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

struct UpsampleBackward {
    ys: Vec<(usize, usize, f64)>,
    xs: Vec<(usize, usize, f64)>,
}

impl<T: Scalar> Backward<T> for UpsampleBackward {
    fn op_name(&self) -> &'static str {
        "upsample_bilinear"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let [n, c, h, w] = dims4("upsample_bilinear", inputs[0].shape()).expect("checked");
        let (oh, ow) = (self.ys.len(), self.xs.len());
        let mut gx = Tensor::<T>::zeros(inputs[0].shape());
        let d = gx.data_mut();
        let g = grad.data();
        for p in 0..n * c {
            let src = &mut d[p * h * w..(p + 1) * h * w];
            let gp = &g[p * oh * ow..(p + 1) * oh * ow];
            for (oy, &(y0, y1, wy)) in self.ys.iter().enumerate() {
                let wy = T::from_f64(wy);
                for (ox, &(x0, x1, wx)) in self.xs.iter().enumerate() {
                    let wx = T::from_f64(wx);
                    let v = gp[oy * ow + ox];
                    let top = v * (T::one() - wy);
                    let bot = v * wy;
                    src[y0 * w + x0] += top * (T::one() - wx);
                    src[y0 * w + x1] += top * wx;
                    src[y1 * w + x0] += bot * (T::one() - wx);
                    src[y1 * w + x1] += bot * wx;
                }
            }
        }
        vec![Some(gx)]
    }
}

/// Batch-normalization statistics source.
pub enum NormMode<'a, T: Scalar> {
    /// Normalize with batch statistics and fold them into the running estimates.
    Train {
        running_mean: &'a mut Tensor<T>,
        running_var: &'a mut Tensor<T>,
    },
    /// Normalize with the running estimates.
    Eval {
        running_mean: &'a Tensor<T>,
        running_var: &'a Tensor<T>,
    },
}

struct BatchNormBackward<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
    n: usize,
    c: usize,
    hw: usize,
}

impl<T: Scalar> Backward<T> for BatchNormBackward<T> {
    fn op_name(&self) -> &'static str {
        "batchnorm2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (n, c, hw) = (self.n, self.c, self.hw);
        let gamma = inputs[1].data();
        let g = grad.data();
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                for i in base..base + hw {
                    sum_g[ch] += g[i];
                    sum_gx[ch] += g[i] * self.xhat[i];
                }
            }
        }
        let gx = needs[0].then(|| {
            let mut out = vec![T::zero(); g.len()];
            let m = T::from_f64((n * hw) as f64);
            for s in 0..n {
                for ch in 0..c {
                    let base = (s * c + ch) * hw;
                    let k = gamma[ch] * self.inv_std[ch];
                    for i in base..base + hw {
                        out[i] = if self.train {
                            k / m * (m * g[i] - sum_g[ch] - self.xhat[i] * sum_gx[ch])
                        } else {
                            k * g[i]
                        };
                    }
                }
            }
            Tensor::new(inputs[0].shape(), out).expect("shape")
        });
        vec![
            gx,
            needs[1].then(|| Tensor::new(&[c], sum_gx).expect("shape")),
            needs[2].then(|| Tensor::new(&[c], sum_g).expect("shape")),
        ]
    }
}

impl<T: Scalar> Tape<T> {
    /// 2-D cross-correlation of `x: [N, C, H, W]` with `w: [F, C, kh, kw]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let [n, c, h, wd] = dims4("conv2d", self.shape(x))?;
        let [f, wc, kh, kw] = dims4("conv2d", self.shape(w))?;
        if wc != c {
            return Err(Error::shape("conv2d", self.shape(x), self.shape(w)));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if kh > h + 2 * pad || kw > wd + 2 * pad {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{wd} (pad {pad})"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [f] {
                return Err(Error::shape("conv2d bias", self.shape(b), &[f]));
            }
        }
        let geom = ConvGeom {
            c,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (wd + 2 * pad - kw) / stride + 1,
        };
        let (rows, cols) = (geom.rows(), geom.cols());
        let in_plane = c * h * wd;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![T::zero(); n * f * cols];
        let mut saved = (!geom.pointwise()).then(|| vec![T::zero(); n * rows * cols]);
        for s in 0..n {
            let xs = &xv[s * in_plane..(s + 1) * in_plane];
            let col: &[T] = match saved.as_mut() {
                Some(all) => {
                    let buf = &mut all[s * rows * cols..(s + 1) * rows * cols];
                    im2col(&geom, xs, buf);
                    buf
                }
                None => xs,
            };
            T::gemm(
                f,
                rows,
                cols,
                T::one(),
                wv,
                (rows as isize, 1),
                col,
                (cols as isize, 1),
                T::zero(),
                &mut out[s * f * cols..(s + 1) * f * cols],
                (cols as isize, 1),
            );
        }
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for (i, plane) in out.chunks_mut(cols.max(1)).enumerate() {
                let bias = bv[i % f];
                plane.iter_mut().for_each(|v| *v += bias);
            }
        }
        let value = Tensor::new(&[n, f, geom.oh, geom.ow], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let rule = Conv2dBackward {
            geom,
            n,
            f,
            cols: saved,
        };
        Ok(self.record(value, inputs, Box::new(rule)))
    }

    /// Max over `window x window` patches; ties resolve to the first maximum in
    /// row-major order, which alone receives the gradient.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize, pad: usize) -> Result<Var> {
        let [n, c, h, w] = dims4("maxpool2d", self.shape(x))?;
        if window == 0 || stride == 0 || pad >= window {
            return Err(Error::invalid(
                "maxpool2d",
                format!("invalid window {window} / stride {stride} / pad {pad}"),
            ));
        }
        if window > h + 2 * pad || window > w + 2 * pad {
            return Err(Error::invalid(
                "maxpool2d",
                format!("window {window} exceeds input {h}x{w} (pad {pad})"),
            ));
        }
        let oh = (h + 2 * pad - window) / stride + 1;
        let ow = (w + 2 * pad - window) / stride + 1;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for p in 0..n * c {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best: Option<(T, usize)> = None;
                    for ki in 0..window {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kj in 0..window {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let j = base + iy as usize * w + ix as usize;
                            let v = xv[j];
                            if best.is_none_or(|(b, _)| v > b) {
                                best = Some((v, j));
                            }
                        }
                    }
                    let (v, j) = best.expect("every window overlaps the input");
                    out.push(v);
                    argmax.push(j);
                }
            }
        }
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        Ok(self.record(value, vec![x], Box::new(MaxPoolBackward { argmax })))
    }

    /// Bilinear resize with corner-aligned sampling: output index `o` reads source
    /// coordinate `o * (in - 1) / (out - 1)`, and a 1-wide output reads index 0.
    pub fn upsample_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let [n, c, h, w] = dims4("upsample_bilinear", self.shape(x))?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid("upsample_bilinear", "output size must be positive"));
        }
        let ys = corner_aligned_taps(h, out_h);
        let xs = corner_aligned_taps(w, out_w);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * out_h * out_w);
        for p in 0..n * c {
            let src = &xv[p * h * w..(p + 1) * h * w];
            for &(y0, y1, wy) in &ys {
                let wy = T::from_f64(wy);
                for &(x0, x1, wx) in &xs {
                    let wx = T::from_f64(wx);
                    let top = src[y0 * w + x0] * (T::one() - wx) + src[y0 * w + x1] * wx;
                    let bot = src[y1 * w + x0] * (T::one() - wx) + src[y1 * w + x1] * wx;
                    out.push(top * (T::one() - wy) + bot * wy);
                }
            }
        }
        let value = Tensor::new(&[n, c, out_h, out_w], out)?;
        Ok(self.record(value, vec![x], Box::new(UpsampleBackward { ys, xs })))
    }

    /// Per-channel normalization of an NCHW map, `eps = 1e-5`, running-stat
    /// momentum 0.1.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_, T>,
    ) -> Result<Var> {
        let [n, c, h, w] = dims4("batchnorm2d", self.shape(x))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("batchnorm2d", self.shape(x), self.shape(gamma)));
        }
        let hw = h * w;
        let m = n * hw;
        let xv = self.value(x).data();
        let (mean, var, train) = match mode {
            NormMode::Train {
                running_mean,
                running_var,
            } => {
                if running_mean.shape() != [c] || running_var.shape() != [c] {
                    return Err(Error::shape("batchnorm2d", &[c], running_mean.shape()));
                }
                let mut mean = vec![0.0f64; c];
                let mut var = vec![0.0f64; c];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * hw;
                        mean[ch] += xv[base..base + hw].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|v| *v /= m as f64);
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * hw;
                        var[ch] += xv[base..base + hw]
                            .iter()
                            .map(|v| (v.as_f64() - mean[ch]).powi(2))
                            .sum::<f64>();
                    }
                }
                let unbiased = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
                var.iter_mut().for_each(|v| *v /= m as f64);
                let mom = BN_MOMENTUM;
                for ch in 0..c {
                    let rm = &mut running_mean.data_mut()[ch];
                    *rm = T::from_f64((1.0 - mom) * rm.as_f64() + mom * mean[ch]);
                    let rv = &mut running_var.data_mut()[ch];
                    *rv = T::from_f64((1.0 - mom) * rv.as_f64() + mom * var[ch] * unbiased);
                }
                (mean, var, true)
            }
            NormMode::Eval {
                running_mean,
                running_var,
            } => {
                if running_mean.shape() != [c] || running_var.shape() != [c] {
                    return Err(Error::shape("batchnorm2d", &[c], running_mean.shape()));
                }
                (running_mean.to_f64_vec(), running_var.to_f64_vec(), false)
            }
        };
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::from_f64(1.0 / (v + BN_EPS).sqrt()))
            .collect();
        let mean_t: Vec<T> = mean.iter().map(|&v| T::from_f64(v)).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * hw;
                for i in base..base + hw {
                    let xh = (xv[i] - mean_t[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let rule = BatchNormBackward {
            xhat,
            inv_std,
            train,
            n,
            c,
            hw,
        };
        Ok(self.record(value, vec![x, gamma, beta], Box::new(rule)))
    }

    /// Mean over the spatial axes: `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        dims4("global_avg_pool", self.shape(x))?;
        self.mean(x, &[2, 3])
    }
}

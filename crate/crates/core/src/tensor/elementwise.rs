//! Pointwise, broadcasting, reduction and reshaping operations.

use super::{strides_of, Backward, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Binary pointwise operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZipKind {
    Add,
    Sub,
    /// Elementwise (Hadamard) product.
    Hadamard,
}

/// Unary pointwise operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapKind {
    Relu,
    Sigmoid,
    /// `alpha * x + beta`
    Affine(f64, f64),
    Abs,
    Square,
}

/// For every element of `a_shape`, the flat index of the matching element of a `b`
/// broadcast over it. `None` when the shapes are already equal.
fn broadcast_index(a_shape: &[usize], b_shape: &[usize]) -> Result<Option<Vec<usize>>> {
    if a_shape == b_shape {
        return Ok(None);
    }
    if b_shape.len() > a_shape.len() {
        return Err(Error::shape("broadcast", a_shape, b_shape));
    }
    let lead = a_shape.len() - b_shape.len();
    let b_strides = strides_of(b_shape);
    let mut eff = vec![0usize; a_shape.len()];
    for (d, &bd) in b_shape.iter().enumerate() {
        let ad = a_shape[lead + d];
        if bd == ad {
            eff[lead + d] = b_strides[d];
        } else if bd != 1 {
            return Err(Error::shape("broadcast", a_shape, b_shape));
        }
    }
    let n: usize = a_shape.iter().product();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; a_shape.len()];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(off);
        for d in (0..a_shape.len()).rev() {
            idx[d] += 1;
            off += eff[d];
            if idx[d] < a_shape[d] {
                break;
            }
            off -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    Ok(Some(out))
}

fn reduce_to<T: Scalar>(grad: &[T], map: &Option<Vec<usize>>, shape: &[usize]) -> Tensor<T> {
    match map {
        None => Tensor::new(shape, grad.to_vec()).expect("same shape"),
        Some(map) => {
            let mut out = Tensor::zeros(shape);
            let data = out.data_mut();
            for (&g, &j) in grad.iter().zip(map) {
                data[j] += g;
            }
            out
        }
    }
}

struct ZipBackward {
    kind: ZipKind,
    map: Option<Vec<usize>>,
}

impl<T: Scalar> Backward<T> for ZipBackward {
    fn op_name(&self) -> &'static str {
        match self.kind {
            ZipKind::Add => "add",
            ZipKind::Sub => "sub",
            ZipKind::Hadamard => "hadamard",
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let bi = |i: usize| self.map.as_ref().map_or(i, |m| m[i]);
        let g = grad.data();
        match self.kind {
            ZipKind::Add | ZipKind::Sub => {
                let ga = needs[0].then(|| grad.clone());
                let gb = needs[1].then(|| {
                    let mut t = reduce_to(g, &self.map, b.shape());
                    if self.kind == ZipKind::Sub {
                        t.data_mut().iter_mut().for_each(|v| *v = -*v);
                    }
                    t
                });
                vec![ga, gb]
            }
            ZipKind::Hadamard => {
                let ga = needs[0].then(|| {
                    let bd = b.data();
                    let data = g.iter().enumerate().map(|(i, &gi)| gi * bd[bi(i)]).collect();
                    Tensor::new(a.shape(), data).expect("shape")
                });
                let gb = needs[1].then(|| {
                    let prod: Vec<T> = g.iter().zip(a.data()).map(|(&gi, &ai)| gi * ai).collect();
                    reduce_to(&prod, &self.map, b.shape())
                });
                vec![ga, gb]
            }
        }
    }
}

struct MapBackward {
    kind: MapKind,
}

impl<T: Scalar> Backward<T> for MapBackward {
    fn op_name(&self) -> &'static str {
        match self.kind {
            MapKind::Relu => "relu",
            MapKind::Sigmoid => "sigmoid",
            MapKind::Affine(..) => "affine",
            MapKind::Abs => "abs",
            MapKind::Square => "square",
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0].data();
        let y = output.data();
        let g = grad.data();
        let zero = T::zero();
        let data: Vec<T> = match self.kind {
            MapKind::Relu => (0..g.len())
                .map(|i| if x[i] > zero { g[i] } else { zero })
                .collect(),
            MapKind::Sigmoid => (0..g.len())
                .map(|i| g[i] * y[i] * (T::one() - y[i]))
                .collect(),
            MapKind::Affine(alpha, _) => {
                let alpha = T::from_f64(alpha);
                g.iter().map(|&gi| gi * alpha).collect()
            }
            MapKind::Abs => (0..g.len())
                .map(|i| {
                    if x[i] > zero {
                        g[i]
                    } else if x[i] < zero {
                        -g[i]
                    } else {
                        zero
                    }
                })
                .collect(),
            MapKind::Square => (0..g.len())
                .map(|i| g[i] * T::from_f64(2.0) * x[i])
                .collect(),
        };
        vec![Some(Tensor::new(grad.shape(), data).expect("shape"))]
    }
}

/// Logistic function, kept strictly inside (0, 1) at the working precision.
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    let s = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    let hi = one - T::epsilon() / T::from_f64(2.0);
    s.max(T::min_positive_value()).min(hi)
}

struct ConcatBackward {
    f: usize,
    g: usize,
}

impl<T: Scalar> Backward<T> for ConcatBackward {
    fn op_name(&self) -> &'static str {
        "concat_features"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let n = grad.shape()[0];
        let width = self.f + self.g;
        let split = |lo: usize, w: usize| {
            let mut out = Vec::with_capacity(n * w);
            for row in grad.data().chunks(width.max(1)).take(n) {
                out.extend_from_slice(&row[lo..lo + w]);
            }
            Tensor::new(&[n, w], out).expect("shape")
        };
        vec![
            needs[0].then(|| split(0, self.f)),
            needs[1].then(|| split(self.f, self.g)),
        ]
    }
}

struct MeanBackward {
    out_index: Vec<usize>,
    count: usize,
}

impl<T: Scalar> Backward<T> for MeanBackward {
    fn op_name(&self) -> &'static str {
        "reduce_mean"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let scale = T::one() / T::from_f64(self.count as f64);
        let g = grad.data();
        let data = self.out_index.iter().map(|&j| g[j] * scale).collect();
        vec![Some(Tensor::new(inputs[0].shape(), data).expect("shape"))]
    }
}

struct ReshapeBackward;

impl<T: Scalar> Backward<T> for ReshapeBackward {
    fn op_name(&self) -> &'static str {
        "reshape"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        vec![Some(
            grad.clone().reshaped(inputs[0].shape()).expect("numel preserved"),
        )]
    }
}

impl<T: Scalar> Tape<T> {
    /// Pointwise binary op. `b` may broadcast over `a` where its aligned-trailing
    /// extents equal `a`'s or are 1; the result has `a`'s shape.
    pub fn zip(&mut self, a: Var, b: Var, kind: ZipKind) -> Result<Var> {
        let map = broadcast_index(self.shape(a), self.shape(b)).map_err(|_| {
            let op = match kind {
                ZipKind::Add => "add",
                ZipKind::Sub => "sub",
                ZipKind::Hadamard => "hadamard",
            };
            Error::shape(op, self.shape(a), self.shape(b))
        })?;
        let (av, bv) = (self.value(a), self.value(b));
        let bd = bv.data();
        let f = |x: T, y: T| match kind {
            ZipKind::Add => x + y,
            ZipKind::Sub => x - y,
            ZipKind::Hadamard => x * y,
        };
        let data: Vec<T> = match &map {
            None => av.data().iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
            Some(m) => av.data().iter().zip(m).map(|(&x, &j)| f(x, bd[j])).collect(),
        };
        let value = Tensor::new(av.shape(), data)?;
        Ok(self.record(value, vec![a, b], Box::new(ZipBackward { kind, map })))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, ZipKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, ZipKind::Sub)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, ZipKind::Hadamard)
    }

    pub fn map(&mut self, x: Var, kind: MapKind) -> Var {
        let xv = self.value(x);
        let zero = T::zero();
        let value = match kind {
            MapKind::Relu => xv.map(|v| if v > zero { v } else { zero }),
            MapKind::Sigmoid => xv.map(sigmoid),
            MapKind::Affine(alpha, beta) => {
                let (alpha, beta) = (T::from_f64(alpha), T::from_f64(beta));
                xv.map(|v| alpha * v + beta)
            }
            MapKind::Abs => xv.map(|v| v.abs()),
            MapKind::Square => xv.map(|v| v * v),
        };
        self.record(value, vec![x], Box::new(MapBackward { kind }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, MapKind::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, MapKind::Sigmoid)
    }

    pub fn affine(&mut self, x: Var, alpha: f64, beta: f64) -> Var {
        self.map(x, MapKind::Affine(alpha, beta))
    }

    /// `[N, F] ++ [N, G] -> [N, F + G]` along the feature axis.
    pub fn concat_features(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[0] != bv.shape()[0] {
            return Err(Error::shape("concat_features", av.shape(), bv.shape()));
        }
        let (n, f, g) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut data = Vec::with_capacity(n * (f + g));
        for i in 0..n {
            data.extend_from_slice(&av.data()[i * f..(i + 1) * f]);
            data.extend_from_slice(&bv.data()[i * g..(i + 1) * g]);
        }
        let value = Tensor::new(&[n, f + g], data)?;
        Ok(self.record(value, vec![a, b], Box::new(ConcatBackward { f, g })))
    }

    /// Arithmetic mean over `axes`, which are removed from the result shape.
    pub fn mean(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axes.is_empty() {
            return Err(Error::invalid("reduce_mean", "empty reduction set"));
        }
        let mut reduced = vec![false; shape.len()];
        for &a in axes {
            if a >= shape.len() || reduced[a] {
                return Err(Error::invalid(
                    "reduce_mean",
                    format!("invalid axes {axes:?} for shape {shape:?}"),
                ));
            }
            reduced[a] = true;
        }
        let out_shape: Vec<usize> = (0..shape.len())
            .filter(|&d| !reduced[d])
            .map(|d| shape[d])
            .collect();
        let count: usize = (0..shape.len())
            .filter(|&d| reduced[d])
            .map(|d| shape[d])
            .product();
        if count == 0 {
            return Err(Error::invalid("reduce_mean", "reduction over zero elements"));
        }
        let out_strides = strides_of(&out_shape);
        let mut eff = vec![0usize; shape.len()];
        let mut k = 0;
        for d in 0..shape.len() {
            if !reduced[d] {
                eff[d] = out_strides[k];
                k += 1;
            }
        }
        let n: usize = shape.iter().product();
        let mut out_index = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        let mut off = 0usize;
        for _ in 0..n {
            out_index.push(off);
            for d in (0..shape.len()).rev() {
                idx[d] += 1;
                off += eff[d];
                if idx[d] < shape[d] {
                    break;
                }
                off -= eff[d] * idx[d];
                idx[d] = 0;
            }
        }
        let mut acc = vec![0.0f64; out_shape.iter().product()];
        for (&v, &j) in self.value(x).data().iter().zip(&out_index) {
            acc[j] += v.as_f64();
        }
        let data = acc.iter().map(|&s| T::from_f64(s / count as f64)).collect();
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.record(
            value,
            vec![x],
            Box::new(MeanBackward { out_index, count }),
        ))
    }

    /// Mean over every axis, yielding a rank-0 scalar.
    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        if axes.is_empty() {
            return Ok(x);
        }
        self.mean(x, &axes)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.record(value, vec![x], Box::new(ReshapeBackward)))
    }
}

use crate::error::{Error, Result};
use crate::imageproc::BinaryMask;
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

/// Gradient rule for a scalar loss whose input gradient was computed in the forward
/// pass; backward only scales it by the incoming gradient.
struct PrecomputedBackward<T> {
    op: &'static str,
    dloss: Tensor<T>,
}

impl<T: Scalar> Backward<T> for PrecomputedBackward<T> {
    fn op_name(&self) -> &'static str {
        self.op
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<T>>> {
        let g = grad.data()[0];
        vec![Some(self.dloss.map(|d| d * g))]
    }
}

fn record_loss<T: Scalar>(
    tape: &mut Tape<T>,
    op: &'static str,
    input: Var,
    loss: f64,
    dloss: Vec<f64>,
) -> Result<Var> {
    let dloss = Tensor::from_f64(tape.shape(input), &dloss)?;
    Ok(tape.record(
        Tensor::scalar(T::from_f64(loss)),
        vec![input],
        Box::new(PrecomputedBackward { op, dloss }),
    ))
}

/// Softmax cross-entropy of `logits: [K]` against `true_class`.
pub fn cls_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, true_class: usize) -> Result<Var> {
    let z = tape.value(logits).to_f64_vec();
    if tape.shape(logits).len() != 1 || z.is_empty() {
        return Err(Error::invalid(
            "cls_loss",
            format!("expected logits of shape [K], got {:?}", tape.shape(logits)),
        ));
    }
    if true_class >= z.len() {
        return Err(Error::invalid(
            "cls_loss",
            format!("class {true_class} out of range for {} logits", z.len()),
        ));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (z[true_class] - max);
    let mut d: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    d[true_class] -= 1.0;
    record_loss(tape, "cls_loss", logits, loss, d)
}

/// Smooth-L1 between box deltas `pred: [4]` and `target`, averaged over the four
/// coordinates.
pub fn box_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: [f64; 4]) -> Result<Var> {
    if tape.shape(pred) != [4] {
        return Err(Error::shape("box_loss", tape.shape(pred), &[4]));
    }
    let p = tape.value(pred).to_f64_vec();
    let mut loss = 0.0;
    let mut d = Vec::with_capacity(4);
    for (pv, tv) in p.iter().zip(target) {
        let diff = pv - tv;
        if diff.abs() < 1.0 {
            loss += 0.5 * diff * diff;
            d.push(diff / 4.0);
        } else {
            loss += diff.abs() - 0.5;
            d.push(diff.signum() / 4.0);
        }
    }
    record_loss(tape, "box_loss", pred, loss / 4.0, d)
}

/// Mean per-pixel binary cross-entropy of `sigmoid(pred_logits)` against a mask.
pub fn mask_loss<T: Scalar>(tape: &mut Tape<T>, pred_logits: Var, target: &BinaryMask) -> Result<Var> {
    let want = [target.height(), target.width()];
    if tape.shape(pred_logits) != want {
        return Err(Error::shape("mask_loss", tape.shape(pred_logits), &want));
    }
    let z = tape.value(pred_logits).to_f64_vec();
    let n = z.len() as f64;
    let mut loss = 0.0;
    let mut d = Vec::with_capacity(z.len());
    for (&zv, &bit) in z.iter().zip(target.bits()) {
        let t = if bit { 1.0 } else { 0.0 };
        loss += zv.max(0.0) - zv * t + (-zv.abs()).exp().ln_1p();
        let p = if zv >= 0.0 {
            1.0 / (1.0 + (-zv).exp())
        } else {
            zv.exp() / (1.0 + zv.exp())
        };
        d.push((p - t) / n);
    }
    record_loss(tape, "mask_loss", pred_logits, loss / n, d)
}

/// `cls + box + mask + reg`, unweighted.
pub fn composite_loss<T: Scalar>(
    tape: &mut Tape<T>,
    cls: Var,
    bbox: Var,
    mask: Var,
    reg: Var,
) -> Result<Var> {
    for v in [cls, bbox, mask, reg] {
        if tape.value(v).numel() != 1 {
            return Err(Error::NonScalarLoss(tape.shape(v).to_vec()));
        }
    }
    let scalar = |tape: &mut Tape<T>, v: Var| tape.reshape(v, &[]);
    let (cls, bbox, mask, reg) = (
        scalar(tape, cls)?,
        scalar(tape, bbox)?,
        scalar(tape, mask)?,
        scalar(tape, reg)?,
    );
    let a = tape.add(cls, bbox)?;
    let b = tape.add(a, mask)?;
    tape.add(b, reg)
}

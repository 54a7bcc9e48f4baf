//! Pool a region of a feature map with RoIAlign and back-propagate the
//! detection-style composite loss through it.

use boneage::imageproc::BinaryMask;
use boneage::maskrcnn::{box_loss, cls_loss, composite_loss, mask_loss, roi_align, RoiBox};
use boneage::tensor::{Tape, Tensor};
use boneage::training::{regression_loss, RegressionLoss};

fn main() -> boneage::Result<()> {
    // one channel, 4x4, value = 10 * row + column
    let values: Vec<f64> = (0..16).map(|i| (10 * (i / 4) + i % 4) as f64).collect();
    let mut tape = Tape::<f64>::new();
    let feat = tape.param(Tensor::from_f64(&[1, 4, 4], &values)?);

    let roi = RoiBox::new(0.5, 0.5, 3.5, 3.5)?;
    let pooled = roi_align(&mut tape, feat, &roi, 2, 2, 2)?;
    println!("pooled 2x2: {:?}", tape.value(pooled).data());

    let logits = tape.param(Tensor::from_f64(&[2], &[0.2, 1.1])?);
    let deltas = tape.param(Tensor::from_f64(&[4], &[0.1, -0.3, 0.05, 0.4])?);
    let target_mask = BinaryMask::from_fn(2, 2, |x, y| x == y);
    let mask_logits = tape.affine(pooled, 0.1, -1.5);
    let mask_logits = tape.reshape(mask_logits, &[2, 2])?;
    let age = tape.param(Tensor::from_f64(&[1, 1], &[0.8])?);
    let truth = Tensor::from_f64(&[1, 1], &[1.0])?;

    let l_cls = cls_loss(&mut tape, logits, 1)?;
    let l_box = box_loss(&mut tape, deltas, [0.0; 4])?;
    let l_mask = mask_loss(&mut tape, mask_logits, &target_mask)?;
    let l_reg = regression_loss(&mut tape, age, &truth, RegressionLoss::Mae)?;
    let total = composite_loss(&mut tape, l_cls, l_box, l_mask, l_reg)?;
    tape.backward(total)?;

    for (name, v) in [("cls", l_cls), ("box", l_box), ("mask", l_mask), ("reg", l_reg), ("total", total)] {
        println!("{name:>5} loss {:.5}", tape.value(v).data()[0]);
    }
    println!("gradient on the feature map: {:?}", tape.grad(feat).unwrap().data());
    Ok(())
}

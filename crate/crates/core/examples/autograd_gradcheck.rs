//! Record a small computation on a tape, differentiate it, and compare the
//! result against central finite differences.

use boneage::tensor::gradcheck::{check_gradients, default_step};
use boneage::tensor::{Tape, Tensor};

fn main() -> boneage::Result<()> {
    let x = Tensor::<f64>::from_f64(&[2, 3], &[0.5, -1.0, 2.0, 0.25, 1.5, -0.75])?;
    let w = Tensor::<f64>::from_f64(&[3, 2], &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6])?;

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let wv = tape.param(w.clone());
    let h = tape.matmul(xv, wv)?;
    let s = tape.sigmoid(h);
    let loss = tape.mean_all(s)?;
    tape.backward(loss)?;

    println!("loss = {:.6}", tape.value(loss).data()[0]);
    println!("dL/dx = {:?}", tape.grad(xv).unwrap().data());
    println!("dL/dw = {:?}", tape.grad(wv).unwrap().data());

    let report = check_gradients(
        &[x, w],
        |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let s = t.sigmoid(h);
            t.mean_all(s)
        },
        default_step::<f64>(),
        usize::MAX,
        0,
    )?;
    println!("relative error per input: {:?}", report.relative_errors);
    Ok(())
}

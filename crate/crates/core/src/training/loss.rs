use crate::error::{Error, Result};
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

/// Form of the age regression loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RegressionLoss {
    /// Mean absolute error.
    #[default]
    Mae,
    /// Mean squared error.
    Mse,
}

impl RegressionLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            RegressionLoss::Mae => "mae",
            RegressionLoss::Mse => "mse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(RegressionLoss::Mae),
            "mse" => Ok(RegressionLoss::Mse),
            other => Err(Error::Config(format!(
                "loss.reg_variant must be `mae` or `mse`, got `{other}`"
            ))),
        }
    }
}

struct RegressionBackward<T> {
    dloss: Tensor<T>,
}

impl<T: Scalar> Backward<T> for RegressionBackward<T> {
    fn op_name(&self) -> &'static str {
        "regression_loss"
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

/// Mean absolute (or squared) error between `pred` and a constant `truth` of the
/// same shape. The absolute-error subgradient is 0 at exact ties.
pub fn regression_loss<T: Scalar>(
    tape: &mut Tape<T>,
    pred: Var,
    truth: &Tensor<T>,
    kind: RegressionLoss,
) -> Result<Var> {
    if tape.shape(pred) != truth.shape() {
        return Err(Error::shape("regression_loss", tape.shape(pred), truth.shape()));
    }
    let n = truth.numel();
    if n == 0 {
        return Err(Error::invalid("regression_loss", "empty batch"));
    }
    let p = tape.value(pred).to_f64_vec();
    let t = truth.to_f64_vec();
    let nf = n as f64;
    let (loss, d): (f64, Vec<f64>) = match kind {
        RegressionLoss::Mae => (
            p.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>() / nf,
            p.iter()
                .zip(&t)
                .map(|(a, b)| {
                    let diff = a - b;
                    if diff > 0.0 {
                        1.0 / nf
                    } else if diff < 0.0 {
                        -1.0 / nf
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        RegressionLoss::Mse => (
            p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / nf,
            p.iter().zip(&t).map(|(a, b)| 2.0 * (a - b) / nf).collect(),
        ),
    };
    let dloss = Tensor::from_f64(truth.shape(), &d)?;
    Ok(tape.record(
        Tensor::scalar(T::from_f64(loss)),
        vec![pred],
        Box::new(RegressionBackward { dloss }),
    ))
}

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{Scalar, Tensor};

/// Nesterov SGD with L2 weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct NesterovSgd<T: Scalar = f32> {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Velocity per parameter name, created on first update.
    pub velocities: ParamStore<T>,
}

impl<T: Scalar> NesterovSgd<T> {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        NesterovSgd {
            lr,
            momentum,
            weight_decay,
            velocities: ParamStore::new(),
        }
    }

    /// One update of every parameter that has a gradient:
    /// `g = grad + wd·p; v = μ·v + g; p -= lr·(g + μ·v)`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &HashMap<String, Tensor<T>>) -> Result<()> {
        for (name, p) in params.iter_mut() {
            let Some(grad) = grads.get(name) else {
                continue;
            };
            if grad.shape() != p.shape() {
                return Err(Error::shape("nesterov_step", p.shape(), grad.shape()));
            }
            if self.velocities.get(name).is_none() {
                self.velocities.insert(name, Tensor::zeros(p.shape()))?;
            }
            let v = self.velocities.get_mut(name).expect("inserted above");
            if v.shape() != p.shape() {
                return Err(Error::shape("nesterov_step", p.shape(), v.shape()));
            }
            let (lr, mu, wd) = (
                T::from_f64(self.lr),
                T::from_f64(self.momentum),
                T::from_f64(self.weight_decay),
            );
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(grad.data()).zip(v.data_mut()) {
                let g = gv + wd * *pv;
                *vv = mu * *vv + g;
                *pv = *pv - lr * (g + mu * *vv);
            }
        }
        Ok(())
    }
}

use rand::Rng;

use super::params::{Bindings, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{NormMode, Scalar, Tape, Tensor, Var};

/// Where batch-norm layers read (and in training, update) running statistics.
pub enum Buffers<'a, T: Scalar> {
    Train(&'a mut ParamStore<T>),
    Eval(&'a ParamStore<T>),
}

/// Everything a layer needs to record its forward pass.
pub struct Context<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub binds: &'a Bindings,
    pub buffers: Buffers<'a, T>,
}

impl<'a, T: Scalar> Context<'a, T> {
    pub fn train(tape: &'a mut Tape<T>, binds: &'a Bindings, buffers: &'a mut ParamStore<T>) -> Self {
        Context {
            tape,
            binds,
            buffers: Buffers::Train(buffers),
        }
    }

    pub fn eval(tape: &'a mut Tape<T>, binds: &'a Bindings, buffers: &'a ParamStore<T>) -> Self {
        Context {
            tape,
            binds,
            buffers: Buffers::Eval(buffers),
        }
    }

    pub fn param(&self, name: &str) -> Result<Var> {
        self.binds.get(name)
    }

    fn batchnorm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let gamma = self.param(&format!("{prefix}.gamma"))?;
        let beta = self.param(&format!("{prefix}.beta"))?;
        let mean_key = format!("{prefix}.running_mean");
        let var_key = format!("{prefix}.running_var");
        match &mut self.buffers {
            Buffers::Train(store) => {
                let (running_mean, running_var) = store.pair_mut(&mean_key, &var_key)?;
                self.tape.batchnorm2d(
                    x,
                    gamma,
                    beta,
                    NormMode::Train {
                        running_mean,
                        running_var,
                    },
                )
            }
            Buffers::Eval(store) => {
                let running_mean = store.require(&mean_key)?;
                let running_var = store.require(&var_key)?;
                self.tape.batchnorm2d(
                    x,
                    gamma,
                    beta,
                    NormMode::Eval {
                        running_mean,
                        running_var,
                    },
                )
            }
        }
    }

    /// batch norm followed by relu
    pub(crate) fn bn_relu(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let y = self.batchnorm(x, prefix)?;
        Ok(self.tape.relu(y))
    }
}

pub(crate) fn init_batchnorm<T: Scalar>(
    params: &mut ParamStore<T>,
    buffers: &mut ParamStore<T>,
    prefix: &str,
    channels: usize,
) -> Result<()> {
    params.insert(format!("{prefix}.gamma"), Tensor::ones(&[channels]))?;
    params.insert(format!("{prefix}.beta"), Tensor::zeros(&[channels]))?;
    buffers.insert(format!("{prefix}.running_mean"), Tensor::zeros(&[channels]))?;
    buffers.insert(format!("{prefix}.running_var"), Tensor::ones(&[channels]))?;
    Ok(())
}

/// Pre-activation residual block. A stride other than 1 or a change of width adds
/// a strided 1x1 projection on the shortcut.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualUnit {
    pub prefix: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ResidualUnit {
    pub fn new(prefix: impl Into<String>, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        ResidualUnit {
            prefix: prefix.into(),
            in_channels,
            out_channels,
            stride,
        }
    }

    pub fn has_projection(&self) -> bool {
        self.stride != 1 || self.in_channels != self.out_channels
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<()> {
        let (p, cin, cout) = (&self.prefix, self.in_channels, self.out_channels);
        init_batchnorm(params, buffers, &format!("{p}.bn1"), cin)?;
        params.insert_he(format!("{p}.conv1.weight"), &[cout, cin, 3, 3], cin * 9, rng)?;
        init_batchnorm(params, buffers, &format!("{p}.bn2"), cout)?;
        params.insert_he(format!("{p}.conv2.weight"), &[cout, cout, 3, 3], cout * 9, rng)?;
        if self.has_projection() {
            params.insert_he(format!("{p}.shortcut.weight"), &[cout, cin, 1, 1], cin, rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Context<'_, T>, x: Var) -> Result<Var> {
        let p = &self.prefix;
        let c = cx.tape.shape(x).get(1).copied();
        if c != Some(self.in_channels) {
            return Err(Error::shape(
                "residual_unit",
                cx.tape.shape(x),
                &[self.in_channels],
            ));
        }
        let h = cx.bn_relu(x, &format!("{p}.bn1"))?;
        let w1 = cx.param(&format!("{p}.conv1.weight"))?;
        let h = cx.tape.conv2d(h, w1, None, self.stride, 1)?;
        let h = cx.bn_relu(h, &format!("{p}.bn2"))?;
        let w2 = cx.param(&format!("{p}.conv2.weight"))?;
        let h = cx.tape.conv2d(h, w2, None, 1, 1)?;
        let shortcut = if self.has_projection() {
            let ws = cx.param(&format!("{p}.shortcut.weight"))?;
            cx.tape.conv2d(x, ws, None, self.stride, 0)?
        } else {
            x
        };
        cx.tape.add(h, shortcut)
    }
}

/// Pre-sigmoid soft-mask logits recorded from one attention module.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionCapture<T: Scalar = f32> {
    pub module: String,
    /// `[N, C, H, W]`, the same shape as the module's trunk output.
    pub logits: Tensor<T>,
}

impl<T: Scalar> AttentionCapture<T> {
    pub fn height(&self) -> usize {
        self.logits.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.logits.shape()[3]
    }
}

/// Result of one attention module: `output = trunk ⊙ (1 + mask)`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub output: Var,
    pub trunk: Var,
    /// Pre-sigmoid mask logits; `None` when the module is ablated.
    pub mask_logits: Option<Var>,
}

/// Attention module: a trunk of residual units modulated by an hourglass soft mask.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionModule {
    pub name: String,
    pub channels: usize,
    pub trunk: Vec<ResidualUnit>,
    pub down: Vec<ResidualUnit>,
    pub up: Vec<ResidualUnit>,
}

impl AttentionModule {
    pub fn new(name: impl Into<String>, channels: usize, trunk_units: usize, depth: usize) -> Self {
        let name = name.into();
        let unit = |kind: &str, i: usize| ResidualUnit::new(format!("{name}.{kind}{i}"), channels, channels, 1);
        AttentionModule {
            trunk: (0..trunk_units).map(|i| unit("trunk", i)).collect(),
            down: (0..depth).map(|i| unit("mask.down", i)).collect(),
            up: (0..depth).map(|i| unit("mask.up", i)).collect(),
            name,
            channels,
        }
    }

    pub fn depth(&self) -> usize {
        self.down.len()
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<()> {
        for u in self.trunk.iter().chain(&self.down).chain(&self.up) {
            u.init(params, buffers, rng)?;
        }
        let (n, c) = (&self.name, self.channels);
        init_batchnorm(params, buffers, &format!("{n}.mask.head.bn1"), c)?;
        params.insert_he(format!("{n}.mask.head.conv1.weight"), &[c, c, 1, 1], c, rng)?;
        init_batchnorm(params, buffers, &format!("{n}.mask.head.bn2"), c)?;
        params.insert_he(format!("{n}.mask.head.conv2.weight"), &[c, c, 1, 1], c, rng)?;
        params.insert(format!("{n}.mask.head.conv2.bias"), Tensor::zeros(&[c]))?;
        Ok(())
    }

    pub fn trunk_forward<T: Scalar>(&self, cx: &mut Context<'_, T>, x: Var) -> Result<Var> {
        let mut t = x;
        for u in &self.trunk {
            t = u.forward(cx, t)?;
        }
        Ok(t)
    }

    /// Soft-mask branch up to (not including) the sigmoid.
    pub fn mask_logits<T: Scalar>(&self, cx: &mut Context<'_, T>, x: Var) -> Result<Var> {
        let mut m = x;
        let mut sizes = Vec::with_capacity(self.depth());
        for u in &self.down {
            let s = cx.tape.shape(m);
            sizes.push((s[2], s[3]));
            m = cx.tape.maxpool2d(m, 3, 2, 1)?;
            m = u.forward(cx, m)?;
        }
        for (u, &(h, w)) in self.up.iter().zip(&sizes).rev() {
            m = u.forward(cx, m)?;
            m = cx.tape.upsample_bilinear(m, h, w)?;
        }
        let n = &self.name;
        let m = cx.bn_relu(m, &format!("{n}.mask.head.bn1"))?;
        let w1 = cx.param(&format!("{n}.mask.head.conv1.weight"))?;
        let m = cx.tape.conv2d(m, w1, None, 1, 0)?;
        let m = cx.bn_relu(m, &format!("{n}.mask.head.bn2"))?;
        let w2 = cx.param(&format!("{n}.mask.head.conv2.weight"))?;
        let b2 = cx.param(&format!("{n}.mask.head.conv2.bias"))?;
        cx.tape.conv2d(m, w2, Some(b2), 1, 0)
    }

    /// `trunk ⊙ (1 + sigmoid(mask))`, or the bare trunk when `attention` is off.
    pub fn forward<T: Scalar>(
        &self,
        cx: &mut Context<'_, T>,
        x: Var,
        attention: bool,
    ) -> Result<AttentionOutput> {
        let trunk = self.trunk_forward(cx, x)?;
        if !attention {
            return Ok(AttentionOutput {
                output: trunk,
                trunk,
                mask_logits: None,
            });
        }
        let logits = self.mask_logits(cx, x)?;
        let output = modulate(cx.tape, trunk, logits)?;
        Ok(AttentionOutput {
            output,
            trunk,
            mask_logits: Some(logits),
        })
    }
}

/// `trunk ⊙ (1 + sigmoid(logits))`
pub fn modulate<T: Scalar>(tape: &mut Tape<T>, trunk: Var, logits: Var) -> Result<Var> {
    let m = tape.sigmoid(logits);
    let one_plus = tape.affine(m, 1.0, 1.0);
    tape.hadamard(trunk, one_plus)
}

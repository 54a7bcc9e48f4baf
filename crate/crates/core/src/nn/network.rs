use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AblationSpec, NetworkConfig, MODULES_PER_STAGE, MODULE_NAMES};
use super::layers::{init_batchnorm, AttentionCapture, AttentionModule, Buffers, Context, ResidualUnit};
use super::params::{Bindings, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Whether batch norm uses batch statistics (and updates running ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Layer layout of a network, without any parameter values.
#[derive(Clone, Debug, PartialEq)]
struct Architecture {
    cfg: NetworkConfig,
    ablation: AblationSpec,
    modules: Vec<AttentionModule>,
    transitions: [ResidualUnit; 2],
}

pub struct NetworkOutput<T: Scalar> {
    /// `[N, 1]` predicted age in months.
    pub age: Var,
    /// One entry per live attention module when capture was requested.
    pub captures: Vec<AttentionCapture<T>>,
}

/// Residual attention regression network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar = f32> {
    arch: Architecture,
    params: ParamStore<T>,
    buffers: ParamStore<T>,
}

/// Build and He-initialize a network from a seed.
pub fn build_network<T: Scalar>(cfg: &NetworkConfig, seed: u64) -> Result<Network<T>> {
    cfg.validate()?;
    if cfg.precision != T::PRECISION {
        return Err(Error::Config(format!(
            "config asks for {} but the network is built at {}",
            cfg.precision.as_str(),
            T::PRECISION.as_str()
        )));
    }
    let [c1, c2, c3] = cfg.widths;
    let mut modules = Vec::with_capacity(MODULE_NAMES.len());
    let mut names = MODULE_NAMES.iter();
    for (stage, &count) in MODULES_PER_STAGE.iter().enumerate() {
        for _ in 0..count {
            let name = names.next().expect("six module names");
            modules.push(AttentionModule::new(
                *name,
                cfg.widths[stage],
                cfg.trunk_units,
                cfg.mask_depths[stage],
            ));
        }
    }
    let arch = Architecture {
        cfg: cfg.clone(),
        ablation: AblationSpec::default(),
        modules,
        transitions: [
            ResidualUnit::new("down1", c1, c2, 2),
            ResidualUnit::new("down2", c2, c3, 2),
        ],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let mut buffers = ParamStore::new();
    params.insert_he("stem.conv.weight", &[c1, 1, 7, 7], 49, &mut rng)?;
    params.insert("stem.conv.bias", Tensor::zeros(&[c1]))?;
    for (i, m) in arch.modules.iter().enumerate() {
        m.init(&mut params, &mut buffers, &mut rng)?;
        if i == 0 {
            arch.transitions[0].init(&mut params, &mut buffers, &mut rng)?;
        } else if i == 2 {
            arch.transitions[1].init(&mut params, &mut buffers, &mut rng)?;
        }
    }
    init_batchnorm(&mut params, &mut buffers, "final.bn", c3)?;
    let f = cfg.feature_width;
    params.insert_he("fc.weight", &[c3, f], c3, &mut rng)?;
    params.insert("fc.bias", Tensor::zeros(&[f]))?;
    params.insert_he("head.weight", &[f + 1, 1], f + 1, &mut rng)?;
    params.insert("head.bias", Tensor::zeros(&[1]))?;
    Ok(Network {
        arch,
        params,
        buffers,
    })
}

/// A copy of `net` with the given components switched off.
pub fn apply_ablation<T: Scalar>(net: &Network<T>, spec: &AblationSpec) -> Result<Network<T>> {
    spec.validate()?;
    let mut out = net.clone();
    out.arch.ablation = spec.clone();
    Ok(out)
}

impl Architecture {
    fn run<T: Scalar>(
        &self,
        cx: &mut Context<'_, T>,
        img: Var,
        gender: Var,
        capture: bool,
    ) -> Result<NetworkOutput<T>> {
        let s = self.cfg.input_size;
        let shape = cx.tape.shape(img).to_vec();
        if shape.len() != 4 || shape[1..] != [1, s, s] {
            return Err(Error::shape("forward", &shape, &[shape.first().copied().unwrap_or(0), 1, s, s]));
        }
        let n = shape[0];
        if cx.tape.shape(gender) != [n, 1] {
            return Err(Error::shape("forward", cx.tape.shape(gender), &[n, 1]));
        }

        let w = cx.param("stem.conv.weight")?;
        let b = cx.param("stem.conv.bias")?;
        let mut x = cx.tape.conv2d(img, w, Some(b), 2, 3)?;
        x = cx.tape.maxpool2d(x, 3, 2, 1)?;
        let mut captures = Vec::new();
        for (i, m) in self.modules.iter().enumerate() {
            let out = m.forward(cx, x, self.ablation.attention_enabled(&m.name))?;
            if let (true, Some(logits)) = (capture, out.mask_logits) {
                captures.push(AttentionCapture {
                    module: m.name.clone(),
                    logits: cx.tape.value(logits).clone(),
                });
            }
            x = out.output;
            if i == 0 {
                x = self.transitions[0].forward(cx, x)?;
            } else if i == 2 {
                x = self.transitions[1].forward(cx, x)?;
            }
        }
        x = cx.bn_relu(x, "final.bn")?;
        x = cx.tape.global_avg_pool(x)?;
        let (w, b) = (cx.param("fc.weight")?, cx.param("fc.bias")?);
        x = cx.tape.linear(x, w, b)?;
        x = cx.tape.relu(x);
        let gender = if self.ablation.gender_enabled {
            gender
        } else {
            cx.tape.constant(Tensor::zeros(&[n, 1]))
        };
        x = cx.tape.concat_features(x, gender)?;
        let (w, b) = (cx.param("head.weight")?, cx.param("head.bias")?);
        x = cx.tape.linear(x, w, b)?;
        let age = cx.tape.affine(x, self.cfg.age_scale, self.cfg.age_mean);
        Ok(NetworkOutput { age, captures })
    }
}

impl<T: Scalar> Network<T> {
    pub fn config(&self) -> &NetworkConfig {
        &self.arch.cfg
    }

    pub fn ablation(&self) -> &AblationSpec {
        &self.arch.ablation
    }

    pub fn modules(&self) -> &[AttentionModule] {
        &self.arch.modules
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Batch-norm running statistics.
    pub fn buffers(&self) -> &ParamStore<T> {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.buffers
    }

    pub fn parameter_count(&self) -> usize {
        self.params.num_elements()
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bindings {
        Bindings::bind(tape, &self.params, trainable)
    }

    /// Record a forward pass of `img: [N, 1, S, S]` (values in [0, 1]) and
    /// `gender: [N, 1]` (0 or 1). Training mode updates running statistics.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        binds: &Bindings,
        img: Var,
        gender: Var,
        mode: Mode,
        capture: bool,
    ) -> Result<NetworkOutput<T>> {
        let Network { arch, buffers, .. } = self;
        let buffers = match mode {
            Mode::Train => Buffers::Train(buffers),
            Mode::Eval => Buffers::Eval(buffers),
        };
        let mut cx = Context {
            tape,
            binds,
            buffers,
        };
        arch.run(&mut cx, img, gender, capture)
    }

    /// Evaluation-mode forward pass that leaves the network untouched.
    pub fn forward_eval(
        &self,
        tape: &mut Tape<T>,
        binds: &Bindings,
        img: Var,
        gender: Var,
        capture: bool,
    ) -> Result<NetworkOutput<T>> {
        let mut cx = Context::eval(tape, binds, &self.buffers);
        self.arch.run(&mut cx, img, gender, capture)
    }

    /// Predicted ages `[N, 1]` and captures, in evaluation mode.
    pub fn predict(
        &self,
        img: &Tensor<T>,
        gender: &Tensor<T>,
        capture: bool,
    ) -> Result<(Tensor<T>, Vec<AttentionCapture<T>>)> {
        let mut tape = Tape::new();
        let binds = self.bind(&mut tape, false);
        let x = tape.constant(img.clone());
        let g = tape.constant(gender.clone());
        let out = self.forward_eval(&mut tape, &binds, x, g, capture)?;
        Ok((tape.value(out.age).clone(), out.captures))
    }
}

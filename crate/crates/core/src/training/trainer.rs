use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{age_batch, eval_image, gender_batch, image_batch, PreparedSample, Sample};
use super::loss::{regression_loss, RegressionLoss};
use super::optim::NesterovSgd;
use super::schedule::PlateauScheduler;
use crate::error::{Error, Result};
use crate::imageproc::{augment, AugmentParams, GrayImage};
use crate::nn::{Mode, Network};
use crate::tensor::{Scalar, Tape, Tensor};

/// Optimizer, schedule and data-loop settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub reg_variant: RegressionLoss,
    /// `None` trains on plain resized images.
    pub augment: Option<AugmentParams>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            patience: 5,
            batch_size: 8,
            epochs: 30,
            seed: 0,
            reg_variant: RegressionLoss::Mae,
            augment: Some(AugmentParams::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail(format!("train.lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("train.momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail(format!("train.weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.patience == 0 {
            return fail("train.patience must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("train.batch_size must be >= 1".into());
        }
        if let Some(a) = &self.augment {
            a.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean regression loss over the epoch's training batches, in months
    /// (months² for the squared variant).
    pub train_loss: f64,
    pub val_mae: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

/// Network plus all mutable training state. Everything is seeded, so two
/// trainers built from the same inputs produce identical logs and weights.
#[derive(Clone, Debug)]
pub struct Trainer<T: Scalar = f32> {
    pub net: Network<T>,
    pub optimizer: NesterovSgd<T>,
    pub scheduler: PlateauScheduler,
    /// Drives batch shuffling and augmentation.
    pub rng: ChaCha8Rng,
    pub epochs_done: usize,
    pub config: TrainConfig,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(net: Network<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            net,
            optimizer: NesterovSgd::new(config.lr, config.momentum, config.weight_decay),
            scheduler: PlateauScheduler::new(config.lr, config.patience),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            epochs_done: 0,
            config,
        })
    }

    /// One pass over `train` followed by validation and a scheduler step.
    pub fn run_epoch(&mut self, train: &[PreparedSample], val: &[PreparedSample]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::Dataset("empty training set".into()));
        }
        let epoch = self.epochs_done + 1;
        let size = self.net.config().input_size;
        let lr = self.optimizer.lr;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let mut images = Vec::with_capacity(chunk.len());
            for &i in chunk {
                images.push(self.training_view(&train[i], size)?);
            }
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &train[i].sample).collect();
            let loss = self.step(&images, &samples)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
        }

        let val_mae = evaluate(&self.net, if val.is_empty() { train } else { val })?;
        if !val_mae.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_mae });
        }
        self.optimizer.lr = self.scheduler.step(val_mae);
        self.epochs_done = epoch;
        Ok(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_mae,
            lr,
        })
    }

    /// Run the configured number of epochs. An empty `val` validates on `train`.
    pub fn fit(&mut self, train: &[PreparedSample], val: &[PreparedSample]) -> Result<Vec<EpochRecord>> {
        (0..self.config.epochs).map(|_| self.run_epoch(train, val)).collect()
    }

    fn training_view(&mut self, p: &PreparedSample, size: usize) -> Result<GrayImage> {
        match &self.config.augment {
            Some(params) => {
                let params = AugmentParams {
                    output_width: size,
                    output_height: size,
                    ..params.clone()
                };
                Ok(augment(&p.image, &p.mask, &params, &mut self.rng)?.0)
            }
            None => eval_image(&p.image, size),
        }
    }

    /// Forward, loss, backward and one optimizer update. Returns the batch loss.
    fn step(&mut self, images: &[GrayImage], samples: &[&Sample]) -> Result<f64> {
        let cfg = self.net.config().clone();
        let mut tape = Tape::new();
        let binds = self.net.bind(&mut tape, true);
        let x = tape.constant(image_batch::<T>(images, cfg.input_size)?);
        let g = tape.constant(gender_batch::<T>(samples));
        let out = self.net.forward(&mut tape, &binds, x, g, Mode::Train, false)?;
        let loss = regression_loss(&mut tape, out.age, &age_batch::<T>(samples), self.config.reg_variant)?;
        let value = tape.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Ok(value);
        }
        // the objective is measured in units of the output scale
        let scale = match self.config.reg_variant {
            RegressionLoss::Mae => cfg.age_scale,
            RegressionLoss::Mse => cfg.age_scale * cfg.age_scale,
        };
        let objective = tape.affine(loss, 1.0 / scale, 0.0);
        tape.backward(objective)?;
        let mut grads = HashMap::new();
        for (name, var) in binds.iter() {
            if let Some(grad) = tape.take_grad(var) {
                grads.insert(name.to_string(), grad);
            }
        }
        self.optimizer.step(self.net.params_mut(), &grads)?;
        Ok(value)
    }
}

/// Build a trainer and run `config.epochs` epochs.
pub fn train<T: Scalar>(
    net: Network<T>,
    config: TrainConfig,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
) -> Result<(Network<T>, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(net, config)?;
    let log = trainer.fit(train_set, val_set)?;
    Ok((trainer.net, log))
}

const EVAL_BATCH: usize = 32;

/// Predicted ages (months) in evaluation mode, without augmentation.
pub fn predict_ages<T: Scalar>(net: &Network<T>, samples: &[PreparedSample]) -> Result<Vec<f64>> {
    let size = net.config().input_size;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let images = chunk
            .iter()
            .map(|p| eval_image(&p.image, size))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Sample> = chunk.iter().map(|p| &p.sample).collect();
        let (ages, _) = net.predict(&image_batch::<T>(&images, size)?, &gender_batch::<T>(&refs), false)?;
        out.extend(ages.data().iter().map(|v| v.as_f64()));
    }
    Ok(out)
}

/// Mean absolute error in months.
pub fn evaluate<T: Scalar>(net: &Network<T>, samples: &[PreparedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty set".into()));
    }
    let pred = predict_ages(net, samples)?;
    Ok(mean_abs_error(&pred, samples.iter().map(|p| p.sample.age_months)))
}

fn mean_abs_error(pred: &[f64], truth: impl Iterator<Item = f64>) -> f64 {
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    total / pred.len() as f64
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_mae_months,lr";

pub fn write_log_csv<W: Write>(mut out: W, log: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in log {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_mae, r.lr)?;
    }
    Ok(())
}

/// Tensor of ages `[N, 1]` predicted for `samples`; convenience for callers that
/// keep working in tensors.
pub fn predict_tensor<T: Scalar>(net: &Network<T>, samples: &[PreparedSample]) -> Result<Tensor<T>> {
    let ages = predict_ages(net, samples)?;
    Tensor::from_f64(&[ages.len(), 1], &ages)
}

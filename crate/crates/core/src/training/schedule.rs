/// Reduce-on-plateau learning-rate schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub best: f64,
    pub bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize) -> Self {
        PlateauScheduler {
            lr,
            factor: 10.0,
            patience,
            min_delta: 1e-4,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Report one validation loss and return the learning rate for the next epoch.
    /// A loss counts as an improvement only if it beats the best by `min_delta`;
    /// after `patience` reports without one the rate is divided by `factor`.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr /= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

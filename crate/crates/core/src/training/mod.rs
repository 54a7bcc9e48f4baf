//! Regression loss, optimizer, schedule, data handling and the training loop.

pub mod data;
pub mod loss;
pub mod optim;
pub mod schedule;
pub mod synthetic;
pub mod trainer;

pub use data::{
    age_batch, eval_image, gender_batch, image_batch, prepare_all, prepare_sample, split_dataset,
    split_indices, PreparedSample, Sample,
};
pub use loss::{regression_loss, RegressionLoss};
pub use optim::NesterovSgd;
pub use schedule::PlateauScheduler;
pub use synthetic::{make_synthetic, pearson, SplitRole, SyntheticCase, SyntheticSpec};
pub use trainer::{
    evaluate, predict_ages, predict_tensor, train, write_log_csv, EpochRecord, TrainConfig, Trainer,
    LOG_HEADER,
};

//! Ablation variants trained side by side on synthetic distractor data.

use std::fmt::Write;

use super::config::{RunConfig, SyntheticRun};
use crate::error::Result;
use crate::imageproc::{CannyParams, GrayImage};
use crate::nn::{apply_ablation, build_network, AblationSpec};
use crate::training::{
    evaluate, make_synthetic, prepare_all, split_dataset, EpochRecord, PreparedSample, Sample, Trainer,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoSegmentation,
    NoDeepAttention,
    NoGender,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoSegmentation,
        Variant::NoDeepAttention,
        Variant::NoGender,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSegmentation => "no-segmentation",
            Variant::NoDeepAttention => "no-Att3_2-Att3_3",
            Variant::NoGender => "no-gender",
        }
    }

    pub fn ablation(self) -> AblationSpec {
        match self {
            Variant::Full => AblationSpec::default(),
            Variant::NoSegmentation => AblationSpec { segmentation_enabled: false, ..AblationSpec::default() },
            Variant::NoDeepAttention => {
                AblationSpec::without_modules(["Att3_2", "Att3_3"]).expect("known module names")
            }
            Variant::NoGender => AblationSpec { gender_enabled: false, ..AblationSpec::default() },
        }
    }
}

/// Mask (or not) and split labelled images with the seeded 90/10 split.
pub fn prepare_split(
    pairs: &[(GrayImage, Sample)],
    ablation: &AblationSpec,
    canny: &CannyParams,
    seed: u64,
) -> Result<(Vec<PreparedSample>, Vec<PreparedSample>)> {
    let prepared = prepare_all(pairs, ablation.segmentation_enabled, canny)?;
    split_dataset(&prepared, seed)
}

/// Outcome of one training run on synthetic data.
pub struct SyntheticOutcome {
    pub trainer: Trainer<f32>,
    pub log: Vec<EpochRecord>,
    pub val_mae: f64,
}

/// Generate the dataset with `seed`, then build, ablate and train a network
/// with the same seed. Returns the validation MAE after the last epoch.
pub fn train_synthetic(
    run: &SyntheticRun,
    cfg: &RunConfig,
    ablation: &AblationSpec,
    seed: u64,
) -> Result<SyntheticOutcome> {
    let spec = crate::training::SyntheticSpec { seed, ..run.spec.clone() };
    let pairs: Vec<_> = make_synthetic(&spec, run.count)?
        .into_iter()
        .map(|c| (c.image, c.sample))
        .collect();
    let (train, val) = prepare_split(&pairs, ablation, &cfg.canny, seed)?;
    let net = apply_ablation(&build_network(&cfg.network, seed)?, ablation)?;
    let mut trainer = Trainer::new(net, crate::training::TrainConfig { seed, ..cfg.train.clone() })?;
    let log = trainer.fit(&train, &val)?;
    let val_mae = evaluate(&trainer.net, &val)?;
    Ok(SyntheticOutcome { trainer, log, val_mae })
}

/// Validation MAE per variant and seed; a failed run keeps its error message.
#[derive(Clone, Debug)]
pub struct SuiteTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<(Variant, Vec<std::result::Result<f64, String>>)>,
}

impl SuiteTable {
    /// Mean over the seeds that finished, `None` if none did.
    pub fn mean(&self, variant: Variant) -> Option<f64> {
        let (_, cells) = self.rows.iter().find(|(v, _)| *v == variant)?;
        let ok: Vec<f64> = cells.iter().filter_map(|c| c.as_ref().ok().copied()).collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("variant");
        for s in &self.seeds {
            let _ = write!(out, ",seed{s}");
        }
        out += ",mean,delta_vs_full\n";
        let base = self.mean(Variant::Full);
        for (variant, cells) in &self.rows {
            out += variant.name();
            for c in cells {
                match c {
                    Ok(v) => {
                        let _ = write!(out, ",{v:.3}");
                    }
                    Err(_) => out += ",failed",
                }
            }
            let mean = self.mean(*variant);
            let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            let delta = mean.zip(base).map(|(m, b)| m - b);
            let _ = writeln!(out, ",{},{}", fmt(mean), fmt(delta));
        }
        out
    }
}

/// Train every variant for every seed. Failures are recorded per cell and the
/// suite continues. `progress` receives one line per finished run.
pub fn run_suite(
    run: &SyntheticRun,
    cfg: &RunConfig,
    seeds: &[u64],
    variants: &[Variant],
    mut progress: impl FnMut(&str),
) -> SuiteTable {
    let rows = variants
        .iter()
        .map(|&variant| {
            let cells = seeds
                .iter()
                .map(|&seed| {
                    let result = train_synthetic(run, cfg, &variant.ablation(), seed)
                        .map(|o| o.val_mae)
                        .map_err(|e| e.to_string());
                    match &result {
                        Ok(mae) => progress(&format!("{} seed {seed}: val MAE {mae:.3}", variant.name())),
                        Err(e) => progress(&format!("{} seed {seed}: failed: {e}", variant.name())),
                    }
                    result
                })
                .collect();
            (variant, cells)
        })
        .collect();
    SuiteTable { seeds: seeds.to_vec(), rows }
}

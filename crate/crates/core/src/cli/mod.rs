//! The `boneage` command line: preprocess, train, eval, predict and ablate-suite.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric divergence.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod suite;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use checkpoint::Checkpoint;
pub use config::{RunConfig, SyntheticRun};
pub use dataset::DatasetIndex;
pub use suite::{run_suite, train_synthetic, SuiteTable, Variant};

use crate::error::{Error, Result};
use crate::imageproc::{resize_bilinear, resize_nearest_mask, segment_hand, GrayImage};
use crate::io::{load_gray, write_pgm, write_ppm};
use crate::nn::{apply_ablation, build_network, export_heatmap, AblationSpec, MODULE_NAMES};
use crate::training::{
    eval_image, evaluate, gender_batch, image_batch, make_synthetic, prepare_all, prepare_sample,
    write_log_csv, Sample, Trainer,
};

#[derive(Debug, Parser)]
#[command(name = "boneage", version, about = "Bone age regression from hand radiographs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment every indexed radiograph and write masked images and masks.
    Preprocess {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a network and write a checkpoint and a CSV log.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated attention modules (Att1_1..Att3_3), `gender` and/or `segmentation`.
        #[arg(long)]
        ablate: Option<String>,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue from a checkpoint instead of a fresh network.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Print the MAE in months of a checkpoint over a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the predicted age in months for one radiograph.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        gender: Gender,
        /// Write one PPM heatmap per attention module into this directory.
        #[arg(long)]
        attention: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the full model and each ablated variant over several seeds.
    AblateSuite {
        #[arg(long)]
        synthetic_spec: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Either an index with its image directory or a synthetic dataset file.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, requires = "images", conflicts_with = "synthetic")]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Synthetic dataset description (synthetic.* keys).
    #[arg(long, required_unless_present = "index")]
    pub synthetic: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Gender {
    Male,
    Female,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnknownModule(_) | Error::InvalidArgument { .. } => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

/// Parse arguments, run, report errors on stderr and map them to an exit code.
pub fn main_with_args<I, A>(args: I) -> ExitCode
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Preprocess { index, images, out: dir, config } => {
            preprocess(&DatasetIndex::load(&index, &images)?, &load_config(config.as_deref())?, &dir, out)
        }
        Command::Train { data, config, ablate, out_checkpoint, log, resume } => {
            let cfg = load_config(config.as_deref())?;
            let ablation = parse_ablation(ablate.as_deref().unwrap_or(""))?;
            cmd_train(&data, &cfg, &ablation, &out_checkpoint, log.as_deref(), resume.as_deref(), out)
        }
        Command::Eval { checkpoint, data, config } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cfg = checked_config(&ck, config.as_deref())?;
            let pairs = load_data(&data)?.0;
            let samples = prepare_all(&pairs, ck.network.ablation().segmentation_enabled, &cfg.canny)?;
            writeln!(out, "{}", evaluate(&ck.network, &samples)?)?;
            Ok(())
        }
        Command::Predict { checkpoint, image, gender, attention, config } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cfg = checked_config(&ck, config.as_deref())?;
            cmd_predict(&ck, &cfg, &load_gray(&image)?, gender, attention.as_deref(), out)
        }
        Command::AblateSuite { synthetic_spec, config, seeds, out: csv } => {
            let cfg = load_config(config.as_deref())?;
            let run = match synthetic_spec {
                Some(p) => SyntheticRun::load(&p)?,
                None => SyntheticRun::default(),
            };
            if seeds == 0 {
                return Err(Error::Config("--seeds must be at least 1".into()));
            }
            let seed_list: Vec<u64> = (0..seeds).map(|k| run.spec.seed + k).collect();
            let table = run_suite(&run, &cfg, &seed_list, &Variant::ALL, |line| eprintln!("{line}"));
            let text = table.render();
            write!(out, "{text}")?;
            if let Some(p) = csv {
                std::fs::write(p, &text)?;
            }
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

/// The run configuration, verified against the checkpoint's network.
fn checked_config(ck: &Checkpoint, path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            ck.check_config(&cfg.network)?;
            Ok(cfg)
        }
        None => Ok(RunConfig { network: ck.network.config().clone(), ..RunConfig::default() }),
    }
}

/// Parse `--ablate`: attention module names plus the words `gender` and `segmentation`.
pub fn parse_ablation(list: &str) -> Result<AblationSpec> {
    let mut spec = AblationSpec::default();
    let mut modules = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "gender" => spec.gender_enabled = false,
            "segmentation" => spec.segmentation_enabled = false,
            name => modules.push(name),
        }
    }
    spec.disabled_modules = AblationSpec::parse_modules(&modules.join(","))?;
    Ok(spec)
}

/// Labelled images and the seed the train/validation split must use.
fn load_data(data: &DataArgs) -> Result<(Vec<(GrayImage, Sample)>, Option<u64>)> {
    match (&data.index, &data.images, &data.synthetic) {
        (Some(index), Some(images), None) => Ok((DatasetIndex::load(index, images)?.load_all()?, None)),
        (None, _, Some(path)) => {
            let run = SyntheticRun::load(path)?;
            let pairs = make_synthetic(&run.spec, run.count)?
                .into_iter()
                .map(|c| (c.image, c.sample))
                .collect();
            // the generator's train/validation roles follow its own seed
            Ok((pairs, Some(run.spec.seed)))
        }
        _ => Err(Error::Config("give either --index with --images, or --synthetic".into())),
    }
}

fn preprocess(index: &DatasetIndex, cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let size = cfg.network.input_size;
    let mut failures = Vec::new();
    for sample in &index.samples {
        let result = index.load_image(sample).and_then(|img| {
            let (masked, mask) = segment_hand(&img, &cfg.canny)?;
            write_pgm(&dir.join(format!("{}.pgm", sample.id)), &resize_bilinear(&masked, size, size)?)?;
            let mask = resize_nearest_mask(&mask, size, size)?;
            write_pgm(&dir.join(format!("{}_mask.pgm", sample.id)), &mask.to_image())
        });
        if let Err(e) = result {
            failures.push(format!("{}: {e}", sample.id));
        }
    }
    let mut report = failures.join("\n");
    if !report.is_empty() {
        report.push('\n');
    }
    std::fs::write(dir.join("report.txt"), report)?;
    writeln!(
        out,
        "processed {} of {} radiographs, {} failed",
        index.samples.len() - failures.len(),
        index.samples.len(),
        failures.len()
    )?;
    Ok(())
}

fn cmd_train(
    data: &DataArgs,
    cfg: &RunConfig,
    ablation: &AblationSpec,
    checkpoint: &Path,
    log: Option<&Path>,
    resume: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let (pairs, split_seed) = load_data(data)?;
    let (train, val) = suite::prepare_split(&pairs, ablation, &cfg.canny, split_seed.unwrap_or(cfg.train.seed))?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            ck.check_config(&cfg.network)?;
            if ck.network.ablation() != ablation {
                return Err(Error::ConfigMismatch("checkpoint was trained with a different ablation".into()));
            }
            ck.into_trainer(cfg.train.clone())?
        }
        None => {
            let net = apply_ablation(&build_network(&cfg.network, cfg.train.seed)?, ablation)?;
            Trainer::new(net, cfg.train.clone())?
        }
    };
    let mut records = Vec::new();
    for _ in 0..cfg.train.epochs {
        let r = trainer.run_epoch(&train, &val)?;
        eprintln!(
            "epoch {} train_loss {:.4} val_mae {:.4} lr {}",
            r.epoch, r.train_loss, r.val_mae, r.lr
        );
        records.push(r);
    }
    Checkpoint::from_trainer(&trainer).save(checkpoint)?;
    if let Some(path) = log {
        write_log_csv(std::io::BufWriter::new(std::fs::File::create(path)?), &records)?;
    }
    let val_mae = evaluate(&trainer.net, &val)?;
    writeln!(out, "trained {} epochs, validation MAE {val_mae}", trainer.epochs_done)?;
    Ok(())
}

fn cmd_predict(
    ck: &Checkpoint,
    cfg: &RunConfig,
    image: &GrayImage,
    gender: Gender,
    attention: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let net = &ck.network;
    let sample = Sample::new("input", 0.0, gender == Gender::Male)?;
    let prepared = prepare_sample(image, sample, net.ablation().segmentation_enabled, &cfg.canny)?;
    let size = net.config().input_size;
    let x = image_batch::<f32>(&[eval_image(&prepared.image, size)?], size)?;
    let g = gender_batch::<f32>(&[&prepared.sample]);
    let (age, captures) = net.predict(&x, &g, attention.is_some())?;
    writeln!(out, "{}", age.data()[0] as f64)?;
    if let Some(dir) = attention {
        std::fs::create_dir_all(dir)?;
        for capture in &captures {
            debug_assert!(MODULE_NAMES.contains(&capture.module.as_str()));
            write_ppm(&dir.join(format!("{}.ppm", capture.module)), &export_heatmap(capture)?)?;
        }
    }
    Ok(())
}

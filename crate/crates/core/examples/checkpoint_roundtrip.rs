//! Train briefly, save a checkpoint, load it back and confirm the predictions
//! match bit for bit.

use boneage::cli::{train_synthetic, Checkpoint, RunConfig, SyntheticRun};
use boneage::nn::AblationSpec;
use boneage::training::{make_synthetic, predict_tensor, prepare_all};

fn main() -> boneage::Result<()> {
    let run = SyntheticRun { count: 40, ..SyntheticRun::default() };
    let mut cfg = RunConfig::default();
    cfg.train.epochs = 2;
    let outcome = train_synthetic(&run, &cfg, &AblationSpec::default(), 0)?;

    let path = std::env::temp_dir().join("boneage_roundtrip.ckpt");
    Checkpoint::from_trainer(&outcome.trainer).save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    println!("checkpoint {} bytes, {} epochs", std::fs::metadata(&path)?.len(), loaded.epochs_done);

    let pairs: Vec<_> = make_synthetic(&run.spec, 8)?
        .into_iter()
        .map(|c| (c.image, c.sample))
        .collect();
    let samples = prepare_all(&pairs, true, &cfg.canny)?;
    let before = predict_tensor(&outcome.trainer.net, &samples)?;
    let after = predict_tensor(&loaded.network, &samples)?;
    let identical = before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("predictions identical after reload: {identical}");

    let resumed = loaded.into_trainer(cfg.train.clone())?;
    println!("resumed trainer at epoch {}", resumed.epochs_done);
    std::fs::remove_file(&path)?;
    Ok(())
}

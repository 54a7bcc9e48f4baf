//! Train briefly, then run one radiograph through the network with attention
//! capture and write a heatmap per module as PPM.

use std::path::PathBuf;

use boneage::cli::{train_synthetic, RunConfig, SyntheticRun};
use boneage::io::write_ppm;
use boneage::nn::{export_heatmap, AblationSpec};
use boneage::training::{eval_image, gender_batch, image_batch, make_synthetic, prepare_sample, SyntheticSpec};

fn main() -> boneage::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("boneage_attention"));
    std::fs::create_dir_all(&dir)?;

    let run = SyntheticRun { count: 60, ..SyntheticRun::default() };
    let mut cfg = RunConfig::default();
    cfg.train.epochs = 5;
    let net = train_synthetic(&run, &cfg, &AblationSpec::default(), 0)?.trainer.net;

    let case = make_synthetic(&SyntheticSpec { seed: 99, ..SyntheticSpec::default() }, 1)?.remove(0);
    let truth = case.sample.age_months;
    let prepared = prepare_sample(&case.image, case.sample, true, &cfg.canny)?;
    let size = net.config().input_size;
    let x = image_batch::<f32>(&[eval_image(&prepared.image, size)?], size)?;
    let g = gender_batch::<f32>(&[&prepared.sample]);
    let (age, captures) = net.predict(&x, &g, true)?;
    println!("predicted {:.1} months, true {truth:.1}", age.data()[0]);

    for capture in &captures {
        let path = dir.join(format!("{}.ppm", capture.module));
        write_ppm(&path, &export_heatmap(capture)?)?;
        println!("{} -> {}", capture.module, path.display());
    }
    Ok(())
}

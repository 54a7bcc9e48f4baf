//! A shrunken ablation suite: full model against no segmentation, no deep
//! attention and no gender, on the distractor dataset.

use boneage::cli::{run_suite, RunConfig, SyntheticRun, Variant};

fn main() {
    let mut run = SyntheticRun::default();
    run.count = 80;
    let mut cfg = RunConfig::default();
    cfg.train.epochs = 4;
    cfg.augment.crop_min = 1.0;
    cfg.train.augment = Some(cfg.augment.clone());

    let table = run_suite(&run, &cfg, &[0, 1], &Variant::ALL, |line| eprintln!("{line}"));
    print!("{}", table.render());
}

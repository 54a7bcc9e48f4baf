//! Train the default network on a small synthetic dataset and print the CSV
//! log. Pass the number of epochs as the first argument (default 10).

use boneage::imageproc::CannyParams;
use boneage::nn::{build_network, NetworkConfig};
use boneage::training::{
    evaluate, make_synthetic, prepare_all, split_dataset, train, write_log_csv, SyntheticSpec, TrainConfig,
};

fn main() -> boneage::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let spec = SyntheticSpec { seed: 4, ..SyntheticSpec::default() };
    let pairs: Vec<_> = make_synthetic(&spec, 120)?.into_iter().map(|c| (c.image, c.sample)).collect();
    let samples = prepare_all(&pairs, true, &CannyParams::default())?;
    let (train_set, val_set) = split_dataset(&samples, spec.seed)?;

    let net = build_network::<f32>(&NetworkConfig::default(), 0)?;
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let (net, log) = train(net, config, &train_set, &val_set)?;

    write_log_csv(std::io::stdout().lock(), &log)?;
    println!("final validation MAE {:.2} months", evaluate(&net, &val_set)?);
    Ok(())
}

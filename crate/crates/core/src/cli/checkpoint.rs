//! Binary checkpoints: network weights, running statistics and the complete
//! optimizer, scheduler and RNG state needed to resume training bit-exactly.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ABA1"  u32 version
//! u32 len, config text (net.* and ablation.* key=value lines)
//! 3 tensor sections (parameters, buffers, velocities):
//!     u32 count, then per tensor: u32 name len, name, u32 rank, rank x u32 extents, f32 values
//! f64 lr, momentum, weight decay
//! f64 scheduler lr, factor, min delta, best; u64 patience, bad epochs
//! u64 epochs done
//! 32-byte RNG seed, u64 stream, u128 word position
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{format_key_values, parse_bool, parse_key_values, KeyValues, RunConfig};
use crate::error::{Error, Result};
use crate::nn::{apply_ablation, build_network, AblationSpec, Network, NetworkConfig, ParamStore};
use crate::tensor::Tensor;
use crate::training::{NesterovSgd, PlateauScheduler, TrainConfig, Trainer};

pub const MAGIC: [u8; 4] = *b"ABA1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub optimizer: NesterovSgd<f32>,
    pub scheduler: PlateauScheduler,
    pub rng: ChaCha8Rng,
    pub epochs_done: usize,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer<f32>) -> Self {
        Checkpoint {
            network: trainer.net.clone(),
            optimizer: trainer.optimizer.clone(),
            scheduler: trainer.scheduler.clone(),
            rng: trainer.rng.clone(),
            epochs_done: trainer.epochs_done,
        }
    }

    /// Resume training. Optimizer, schedule and RNG come from the checkpoint;
    /// batch size, epoch count and augmentation from `config`.
    pub fn into_trainer(self, config: TrainConfig) -> Result<Trainer<f32>> {
        let mut trainer = Trainer::new(self.network, config)?;
        trainer.optimizer = self.optimizer;
        trainer.scheduler = self.scheduler;
        trainer.rng = self.rng;
        trainer.epochs_done = self.epochs_done;
        Ok(trainer)
    }

    /// Reject a checkpoint whose network differs from the run configuration.
    pub fn check_config(&self, expected: &NetworkConfig) -> Result<()> {
        let found = self.network.config();
        if found == expected {
            return Ok(());
        }
        let a = network_echo(found);
        let b = network_echo(expected);
        let diff: Vec<String> = a
            .iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, v)| format!("{k}: checkpoint {v}, config {}", b.get(k).map_or("?", String::as_str)))
            .collect();
        Err(Error::ConfigMismatch(diff.join("; ")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&MAGIC);
        w.u32(VERSION);
        let mut echo = network_echo(self.network.config());
        let ab = self.network.ablation();
        echo.insert("ablation.modules".into(), ab.module_list());
        echo.insert("ablation.gender".into(), ab.gender_enabled.to_string());
        echo.insert("ablation.segmentation".into(), ab.segmentation_enabled.to_string());
        let text = format_key_values(&echo);
        w.u32(text.len() as u32);
        w.bytes(text.as_bytes());
        w.store(self.network.params());
        w.store(self.network.buffers());
        w.store(&self.optimizer.velocities);
        w.f64(self.optimizer.lr);
        w.f64(self.optimizer.momentum);
        w.f64(self.optimizer.weight_decay);
        let s = &self.scheduler;
        w.f64(s.lr);
        w.f64(s.factor);
        w.f64(s.min_delta);
        w.f64(s.best);
        w.u64(s.patience as u64);
        w.u64(s.bad_epochs as u64);
        w.u64(self.epochs_done as u64);
        w.bytes(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        w.bytes(&self.rng.get_word_pos().to_le_bytes());
        w.buf
    }

    /// Decode a whole checkpoint; nothing is returned unless every section parses.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.array("magic")?;
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion { found: version, expected: VERSION });
        }
        let len = r.u32("config")? as usize;
        let text = std::str::from_utf8(r.take(len, "config")?)
            .map_err(|_| Error::MalformedCheckpoint("config text is not UTF-8".into()))?;
        let (cfg, ablation) = parse_echo(text)?;
        let params = r.store("parameters")?;
        let buffers = r.store("buffers")?;
        let velocities = r.store("velocities")?;
        let mut optimizer = NesterovSgd::new(r.f64("optimizer")?, r.f64("optimizer")?, r.f64("optimizer")?);
        optimizer.velocities = velocities;
        let scheduler = PlateauScheduler {
            lr: r.f64("scheduler")?,
            factor: r.f64("scheduler")?,
            min_delta: r.f64("scheduler")?,
            best: r.f64("scheduler")?,
            patience: r.u64("scheduler")? as usize,
            bad_epochs: r.u64("scheduler")? as usize,
        };
        let epochs_done = r.u64("epoch counter")? as usize;
        let seed: [u8; 32] = r.array("rng")?;
        let stream = r.u64("rng")?;
        let word_pos = u128::from_le_bytes(r.array("rng")?);
        if r.pos != bytes.len() {
            return Err(Error::MalformedCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }

        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let mut network = apply_ablation(&build_network::<f32>(&cfg, 0)?, &ablation)?;
        fill(network.params_mut(), params, "parameter")?;
        fill(network.buffers_mut(), buffers, "buffer")?;
        for (name, v) in optimizer.velocities.iter() {
            match network.params().get(name) {
                Some(p) if p.shape() == v.shape() => {}
                _ => return Err(Error::MalformedCheckpoint(format!("velocity `{name}` has no matching parameter"))),
            }
        }
        Ok(Checkpoint { network, optimizer, scheduler, rng, epochs_done })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.encode())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// `net.*` keys of a network configuration, as written in run configs.
fn network_echo(cfg: &NetworkConfig) -> KeyValues {
    let run = RunConfig { network: cfg.clone(), ..RunConfig::default() };
    run.to_map().into_iter().filter(|(k, _)| k.starts_with("net.")).collect()
}

fn parse_echo(text: &str) -> Result<(NetworkConfig, AblationSpec)> {
    let bad = |m: String| Error::MalformedCheckpoint(m);
    let mut map = parse_key_values(text).map_err(|e| bad(e.to_string()))?;
    let mut ablation = AblationSpec::default();
    let flag = |map: &mut KeyValues, key: &str| -> Result<bool> {
        let raw = map.remove(key).ok_or_else(|| bad(format!("missing `{key}`")))?;
        parse_bool(&raw).ok_or_else(|| bad(format!("`{key}` is not a boolean")))
    };
    ablation.gender_enabled = flag(&mut map, "ablation.gender")?;
    ablation.segmentation_enabled = flag(&mut map, "ablation.segmentation")?;
    let modules = map.remove("ablation.modules").ok_or_else(|| bad("missing `ablation.modules`".into()))?;
    ablation.disabled_modules = AblationSpec::parse_modules(&modules)?;
    if map.keys().any(|k| !k.starts_with("net.")) {
        return Err(bad("unexpected key in config echo".into()));
    }
    let run = RunConfig::from_map(map).map_err(|e| bad(e.to_string()))?;
    Ok((run.network, ablation))
}

fn fill(target: &mut ParamStore<f32>, source: ParamStore<f32>, what: &str) -> Result<()> {
    if target.len() != source.len() {
        return Err(Error::MalformedCheckpoint(format!(
            "expected {} {what} tensors, found {}",
            target.len(),
            source.len()
        )));
    }
    for (name, value) in source.iter() {
        let slot = target
            .get_mut(name)
            .ok_or_else(|| Error::MalformedCheckpoint(format!("unexpected {what} `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(Error::MalformedCheckpoint(format!(
                "{what} `{name}` has shape {:?}, expected {:?}",
                value.shape(),
                slot.shape()
            )));
        }
        *slot = value.clone();
    }
    Ok(())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    fn store(&mut self, store: &ParamStore<f32>) {
        self.u32(store.len() as u32);
        for (name, t) in store.iter() {
            self.u32(name.len() as u32);
            self.bytes(name.as_bytes());
            self.u32(t.rank() as u32);
            for &d in t.shape() {
                self.u32(d as u32);
            }
            for v in t.data() {
                self.bytes(&v.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Error::Truncated(section))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, section: &'static str) -> Result<[u8; N]> {
        Ok(self.take(N, section)?.try_into().expect("length checked"))
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(section)?))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(section)?))
    }

    fn f64(&mut self, section: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(section)?))
    }

    fn store(&mut self, section: &'static str) -> Result<ParamStore<f32>> {
        let count = self.u32(section)?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = self.u32(section)? as usize;
            let name = std::str::from_utf8(self.take(len, section)?)
                .map_err(|_| Error::MalformedCheckpoint(format!("{section}: name is not UTF-8")))?
                .to_string();
            let rank = self.u32(section)? as usize;
            if rank > 8 {
                return Err(Error::MalformedCheckpoint(format!("{section}: `{name}` has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u32(section)? as usize);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = numel
                .filter(|n| n.checked_mul(4).is_some())
                .ok_or_else(|| Error::MalformedCheckpoint(format!("{section}: `{name}` is too large")))?;
            let raw = self.take(numel * 4, section)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            store
                .insert(name, Tensor::new(&shape, data)?)
                .map_err(|e| Error::MalformedCheckpoint(format!("{section}: {e}")))?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageproc::CannyParams;
    use crate::training::{make_synthetic, prepare_all, SyntheticSpec};

    fn small_cfg() -> NetworkConfig {
        NetworkConfig { input_size: 16, widths: [2, 2, 4], feature_width: 4, ..NetworkConfig::default() }
    }

    fn trained() -> Trainer<f32> {
        let spec = SyntheticSpec { image_size: 32, ..Default::default() };
        let pairs: Vec<_> = make_synthetic(&spec, 6).unwrap().into_iter().map(|c| (c.image, c.sample)).collect();
        let data = prepare_all(&pairs, false, &CannyParams::default()).unwrap();
        let net = apply_ablation(
            &build_network(&small_cfg(), 1).unwrap(),
            &AblationSpec { gender_enabled: false, ..AblationSpec::without_modules(["Att3_2"]).unwrap() },
        )
        .unwrap();
        let mut t = Trainer::new(net, TrainConfig { epochs: 2, batch_size: 3, ..Default::default() }).unwrap();
        t.fit(&data, &[]).unwrap();
        t
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let ck = Checkpoint::from_trainer(&trained());
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.network, ck.network);
        assert_eq!(back.optimizer, ck.optimizer);
        assert_eq!(back.rng, ck.rng);
        assert_eq!(back.encode(), bytes);
        assert_eq!(&bytes[..4], b"ABA1");
    }

    #[test]
    fn corruption_classes() {
        let bytes = Checkpoint::from_trainer(&trained()).encode();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Checkpoint::decode(&bad),
            Err(Error::UnsupportedVersion { found: 2, expected: 1 })
        ));
        for cut in [0, 3, 6, 10, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::decode(&bytes[..cut]), Err(Error::Truncated(_))), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::decode(&long), Err(Error::MalformedCheckpoint(_))));
    }

    #[test]
    fn config_mismatch_detected() {
        let ck = Checkpoint::from_trainer(&trained());
        assert!(ck.check_config(&small_cfg()).is_ok());
        let other = NetworkConfig { feature_width: 8, ..small_cfg() };
        match ck.check_config(&other) {
            Err(Error::ConfigMismatch(msg)) => assert!(msg.contains("net.feature_width")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resumed_training_matches_uninterrupted() {
        let spec = SyntheticSpec { image_size: 32, ..Default::default() };
        let pairs: Vec<_> = make_synthetic(&spec, 6).unwrap().into_iter().map(|c| (c.image, c.sample)).collect();
        let data = prepare_all(&pairs, false, &CannyParams::default()).unwrap();
        let config = TrainConfig { epochs: 2, batch_size: 3, ..Default::default() };
        let net = build_network::<f32>(&small_cfg(), 4).unwrap();

        let mut straight = Trainer::new(net.clone(), config.clone()).unwrap();
        let full: Vec<_> = (0..4).map(|_| straight.run_epoch(&data, &[]).unwrap()).collect();

        let mut first = Trainer::new(net, config.clone()).unwrap();
        first.fit(&data, &[]).unwrap();
        let bytes = Checkpoint::from_trainer(&first).encode();
        let mut resumed = Checkpoint::decode(&bytes).unwrap().into_trainer(config).unwrap();
        let rest = resumed.fit(&data, &[]).unwrap();
        assert_eq!(&full[2..], &rest[..]);
        assert_eq!(resumed.net, straight.net);
    }
}

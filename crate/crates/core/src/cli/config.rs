//! `key=value` run configuration files with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imageproc::{AugmentParams, CannyParams};
use crate::nn::NetworkConfig;
use crate::training::{RegressionLoss, SyntheticSpec, TrainConfig};

pub type KeyValues = BTreeMap<String, String>;

/// Parse `key=value` lines. Blank lines and text after `#` are ignored;
/// repeated keys are an error.
pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut map = KeyValues::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(map)
}

pub fn format_key_values(map: &KeyValues) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Consumes keys from a map, converting and range-checking values; any key
/// left over at the end is unknown.
struct Fields {
    map: KeyValues,
}

impl Fields {
    fn take<V: FromStr>(&mut self, key: &str, slot: &mut V) -> Result<()> {
        if let Some(raw) = self.map.remove(key) {
            *slot = raw
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{raw}`")))?;
        }
        Ok(())
    }

    fn take_bool(&mut self, key: &str, slot: &mut bool) -> Result<()> {
        if let Some(raw) = self.map.remove(key) {
            *slot = parse_bool(&raw).ok_or_else(|| Error::Config(format!("{key}: expected true or false, got `{raw}`")))?;
        }
        Ok(())
    }

    fn take_triple(&mut self, key: &str, slot: &mut [usize; 3]) -> Result<()> {
        if let Some(raw) = self.map.remove(key) {
            let parts: Vec<usize> = raw
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("{key}: expected three integers, got `{raw}`")))?;
            *slot = parts
                .try_into()
                .map_err(|_| Error::Config(format!("{key}: expected three integers, got `{raw}`")))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

pub(crate) fn parse_bool(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn put(map: &mut KeyValues, key: &str, v: impl Display) {
    map.insert(key.to_string(), v.to_string());
}

fn triple(v: [usize; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

/// Everything a CLI run needs besides data paths.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub canny: CannyParams,
    pub network: NetworkConfig,
    /// `train.augment` is `None` when `augment.enabled=false`; the ranges are
    /// then kept in `augment` so that they survive a round trip.
    pub train: TrainConfig,
    pub augment: AugmentParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        let network = NetworkConfig::default();
        let augment = AugmentParams {
            output_width: network.input_size,
            output_height: network.input_size,
            ..AugmentParams::default()
        };
        RunConfig {
            canny: CannyParams::default(),
            train: TrainConfig { augment: Some(augment.clone()), ..TrainConfig::default() },
            network,
            augment,
        }
    }
}

impl RunConfig {
    /// Build from a key map on top of the defaults. Unknown keys are rejected.
    pub fn from_map(map: KeyValues) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut f = Fields { map };
        f.take("canny.sigma", &mut cfg.canny.sigma)?;
        f.take("canny.low", &mut cfg.canny.low)?;
        f.take("canny.high", &mut cfg.canny.high)?;

        let net = &mut cfg.network;
        f.take("net.input_size", &mut net.input_size)?;
        f.take_triple("net.widths", &mut net.widths)?;
        f.take("net.trunk_units", &mut net.trunk_units)?;
        f.take_triple("net.mask_depths", &mut net.mask_depths)?;
        f.take("net.feature_width", &mut net.feature_width)?;
        f.take("net.age_mean", &mut net.age_mean)?;
        f.take("net.age_scale", &mut net.age_scale)?;

        let t = &mut cfg.train;
        f.take("train.lr", &mut t.lr)?;
        f.take("train.momentum", &mut t.momentum)?;
        f.take("train.weight_decay", &mut t.weight_decay)?;
        f.take("train.patience", &mut t.patience)?;
        f.take("train.batch_size", &mut t.batch_size)?;
        f.take("train.epochs", &mut t.epochs)?;
        f.take("train.seed", &mut t.seed)?;
        let mut variant = t.reg_variant.as_str().to_string();
        f.take("loss.reg_variant", &mut variant)?;
        t.reg_variant = RegressionLoss::parse(&variant)?;

        let mut enabled = true;
        f.take_bool("augment.enabled", &mut enabled)?;
        let a = &mut cfg.augment;
        f.take("augment.crop_min", &mut a.crop_min)?;
        f.take("augment.crop_max", &mut a.crop_max)?;
        f.take("augment.rotation_deg", &mut a.rotation_deg)?;
        f.take("augment.mirror_prob", &mut a.mirror_prob)?;
        f.finish()?;

        a.output_width = cfg.network.input_size;
        a.output_height = cfg.network.input_size;
        cfg.train.augment = enabled.then(|| cfg.augment.clone());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_map(&self) -> KeyValues {
        let mut m = KeyValues::new();
        put(&mut m, "canny.sigma", self.canny.sigma);
        put(&mut m, "canny.low", self.canny.low);
        put(&mut m, "canny.high", self.canny.high);
        let n = &self.network;
        put(&mut m, "net.input_size", n.input_size);
        put(&mut m, "net.widths", triple(n.widths));
        put(&mut m, "net.trunk_units", n.trunk_units);
        put(&mut m, "net.mask_depths", triple(n.mask_depths));
        put(&mut m, "net.feature_width", n.feature_width);
        put(&mut m, "net.age_mean", n.age_mean);
        put(&mut m, "net.age_scale", n.age_scale);
        let t = &self.train;
        put(&mut m, "train.lr", t.lr);
        put(&mut m, "train.momentum", t.momentum);
        put(&mut m, "train.weight_decay", t.weight_decay);
        put(&mut m, "train.patience", t.patience);
        put(&mut m, "train.batch_size", t.batch_size);
        put(&mut m, "train.epochs", t.epochs);
        put(&mut m, "train.seed", t.seed);
        put(&mut m, "loss.reg_variant", t.reg_variant.as_str());
        put(&mut m, "augment.enabled", t.augment.is_some());
        let a = &self.augment;
        put(&mut m, "augment.crop_min", a.crop_min);
        put(&mut m, "augment.crop_max", a.crop_max);
        put(&mut m, "augment.rotation_deg", a.rotation_deg);
        put(&mut m, "augment.mirror_prob", a.mirror_prob);
        m
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(parse_key_values(text)?)
    }

    pub fn to_text(&self) -> String {
        format_key_values(&self.to_map())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.canny;
        if !(c.sigma.is_finite() && c.sigma > 0.0) {
            return Err(Error::Config(format!("canny.sigma must be > 0, got {}", c.sigma)));
        }
        if !(0.0 < c.low && c.low <= c.high && c.high <= 1.0) {
            return Err(Error::Config(format!(
                "canny thresholds must satisfy 0 < low <= high <= 1, got {} and {}",
                c.low, c.high
            )));
        }
        self.network.validate()?;
        self.train.validate()?;
        self.augment
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// A synthetic dataset description: generator settings plus the sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRun {
    pub spec: SyntheticSpec,
    pub count: usize,
}

impl Default for SyntheticRun {
    fn default() -> Self {
        SyntheticRun {
            spec: SyntheticSpec {
                gender_offset: 24.0,
                label_noise: 12.0,
                ..SyntheticSpec::default()
            },
            count: 400,
        }
    }
}

impl SyntheticRun {
    pub fn from_map(map: KeyValues) -> Result<Self> {
        let mut run = SyntheticRun::default();
        let s = &mut run.spec;
        let mut f = Fields { map };
        f.take("synthetic.count", &mut run.count)?;
        f.take("synthetic.image_size", &mut s.image_size)?;
        f.take("synthetic.radius_min", &mut s.radius_range.0)?;
        f.take("synthetic.radius_max", &mut s.radius_range.1)?;
        f.take("synthetic.age_min", &mut s.age_range.0)?;
        f.take("synthetic.age_max", &mut s.age_range.1)?;
        f.take("synthetic.gender_offset", &mut s.gender_offset)?;
        f.take("synthetic.tag_count", &mut s.tag_count)?;
        f.take("synthetic.tag_min", &mut s.tag_intensity.0)?;
        f.take("synthetic.tag_max", &mut s.tag_intensity.1)?;
        f.take("synthetic.label_noise", &mut s.label_noise)?;
        f.take_bool("synthetic.border_bars", &mut s.border_bars)?;
        f.take("synthetic.seed", &mut s.seed)?;
        f.finish()?;
        run.spec.validate()?;
        if run.count == 0 {
            return Err(Error::Config("synthetic.count must be >= 1".into()));
        }
        Ok(run)
    }

    pub fn to_map(&self) -> KeyValues {
        let s = &self.spec;
        let mut m = KeyValues::new();
        put(&mut m, "synthetic.count", self.count);
        put(&mut m, "synthetic.image_size", s.image_size);
        put(&mut m, "synthetic.radius_min", s.radius_range.0);
        put(&mut m, "synthetic.radius_max", s.radius_range.1);
        put(&mut m, "synthetic.age_min", s.age_range.0);
        put(&mut m, "synthetic.age_max", s.age_range.1);
        put(&mut m, "synthetic.gender_offset", s.gender_offset);
        put(&mut m, "synthetic.tag_count", s.tag_count);
        put(&mut m, "synthetic.tag_min", s.tag_intensity.0);
        put(&mut m, "synthetic.tag_max", s.tag_intensity.1);
        put(&mut m, "synthetic.label_noise", s.label_noise);
        put(&mut m, "synthetic.border_bars", s.border_bars);
        put(&mut m, "synthetic.seed", s.seed);
        m
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(parse_key_values(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

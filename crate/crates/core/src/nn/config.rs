use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::Precision;

/// Attention module names in forward order.
pub const MODULE_NAMES: [&str; 6] = ["Att1_1", "Att2_1", "Att2_2", "Att3_1", "Att3_2", "Att3_3"];

/// Number of attention modules in each of the three stages.
pub const MODULES_PER_STAGE: [usize; 3] = [1, 2, 3];

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// Side of the square input image.
    pub input_size: usize,
    /// Channel width of stages 1-3.
    pub widths: [usize; 3],
    /// Residual units in each trunk branch.
    pub trunk_units: usize,
    /// Soft-mask pooling depth for stages 1-3.
    pub mask_depths: [usize; 3],
    /// Backbone feature width before the gender input is appended.
    pub feature_width: usize,
    pub precision: Precision,
    /// The head predicts `age_mean + age_scale * y`, in months.
    pub age_mean: f64,
    pub age_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_size: 64,
            widths: [8, 16, 32],
            trunk_units: 2,
            mask_depths: [3, 2, 1],
            feature_width: 16,
            precision: Precision::F32,
            age_mean: 120.0,
            age_scale: 60.0,
        }
    }
}

impl NetworkConfig {
    /// Full-resolution preset: 448 px input, widths 64/128/256.
    pub fn paper_scale() -> Self {
        NetworkConfig {
            input_size: 448,
            widths: [64, 128, 256],
            feature_width: 256,
            ..Self::default()
        }
    }

    /// Smallest useful network (16 px, two channels per stage) at 64-bit precision.
    pub fn tiny() -> Self {
        NetworkConfig {
            input_size: 16,
            widths: [2, 2, 2],
            feature_width: 2,
            precision: Precision::F64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.input_size < 4 {
            return fail(format!("input size {} is below 4", self.input_size));
        }
        if self.widths.contains(&0) {
            return fail("stage widths must be positive".into());
        }
        if self.trunk_units == 0 {
            return fail("trunk needs at least one residual unit".into());
        }
        if self.mask_depths.contains(&0) {
            return fail("soft-mask depth must be at least 1 in every stage".into());
        }
        if self.feature_width == 0 {
            return fail("feature width must be positive".into());
        }
        if !(self.age_scale.is_finite() && self.age_scale > 0.0 && self.age_mean.is_finite()) {
            return fail("age_mean must be finite and age_scale positive".into());
        }
        Ok(())
    }

    /// Spatial side of the feature maps in stages 1-3.
    pub fn stage_sizes(&self) -> [usize; 3] {
        let half = |s: usize| (s - 1) / 2 + 1;
        let s1 = half(half(self.input_size));
        let s2 = half(s1);
        [s1, s2, half(s2)]
    }
}

/// Components switched off for an ablation run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AblationSpec {
    /// Modules whose soft mask is forced to zero.
    pub disabled_modules: BTreeSet<String>,
    pub gender_enabled: bool,
    /// Read by the training pipeline: when false, images are used unmasked.
    pub segmentation_enabled: bool,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            disabled_modules: BTreeSet::new(),
            gender_enabled: true,
            segmentation_enabled: true,
        }
    }
}

impl AblationSpec {
    pub fn without_modules<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let spec = AblationSpec {
            disabled_modules: names.into_iter().map(String::from).collect(),
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse a comma-separated module list; an empty string disables nothing.
    pub fn parse_modules(list: &str) -> Result<BTreeSet<String>> {
        let names: BTreeSet<String> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        for n in &names {
            if !MODULE_NAMES.contains(&n.as_str()) {
                return Err(Error::UnknownModule(n.clone()));
            }
        }
        Ok(names)
    }

    pub fn validate(&self) -> Result<()> {
        match self
            .disabled_modules
            .iter()
            .find(|n| !MODULE_NAMES.contains(&n.as_str()))
        {
            Some(n) => Err(Error::UnknownModule(n.clone())),
            None => Ok(()),
        }
    }

    pub fn attention_enabled(&self, module: &str) -> bool {
        !self.disabled_modules.contains(module)
    }

    pub fn module_list(&self) -> String {
        self.disabled_modules.iter().cloned().collect::<Vec<_>>().join(",")
    }
}

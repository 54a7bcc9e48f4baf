//! Synthetic radiographs: a uniform bright disc whose radius encodes age, with optional
//! corner tags whose intensity tracks the label only on the training side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::data::{split_indices, Sample};
use crate::error::{Error, Result};
use crate::imageproc::{BinaryMask, GrayImage};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub image_size: usize,
    /// Disc radius range as fractions of the image side.
    pub radius_range: (f64, f64),
    /// Ages (months) at the smallest and largest radius; linear in between.
    pub age_range: (f64, f64),
    /// Months added for male samples.
    pub gender_offset: f64,
    /// Corner tags per image, at most 4.
    pub tag_count: usize,
    pub tag_intensity: (u8, u8),
    /// Standard deviation of Gaussian label noise, months.
    pub label_noise: f64,
    /// Short bright bars along the image border.
    pub border_bars: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            image_size: 64,
            radius_range: (0.22, 0.38),
            age_range: (24.0, 204.0),
            gender_offset: 0.0,
            tag_count: 2,
            tag_intensity: (60, 255),
            label_noise: 0.0,
            border_bars: true,
            seed: 0,
        }
    }
}

/// Which side of the seeded 90/10 split a generated case falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCase {
    pub image: GrayImage,
    pub sample: Sample,
    pub radius: f64,
    /// Pixels whose centre lies inside the disc.
    pub hand: BinaryMask,
    /// Pixels covered by tag rectangles.
    pub tags: BinaryMask,
    pub tag_intensity: u8,
    pub role: SplitRole,
}

const BACKGROUND: f64 = 20.0;
const DISC: f64 = 180.0;
const BAR_INTENSITY: u8 = 230;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.radius_range;
        let (a0, a1) = self.age_range;
        let fail = |m: &str| Err(Error::Config(format!("synthetic: {m}")));
        if self.image_size < 24 {
            return fail("image size must be at least 24");
        }
        if !(0.0 < r0 && r0 < r1 && r1 <= 0.4) {
            return fail("radius range must satisfy 0 < min < max <= 0.4");
        }
        if !(a0.is_finite() && a1.is_finite() && 0.0 <= a0 && a0 < a1) {
            return fail("age range must satisfy 0 <= min < max");
        }
        if self.tag_count > 4 {
            return fail("at most 4 tags");
        }
        if self.tag_intensity.0 > self.tag_intensity.1 {
            return fail("tag intensity range is reversed");
        }
        if !(self.gender_offset.is_finite() && self.gender_offset >= 0.0) {
            return fail("gender offset must be finite and >= 0");
        }
        if !(self.label_noise.is_finite() && self.label_noise >= 0.0) {
            return fail("label noise must be finite and >= 0");
        }
        Ok(())
    }

    /// Noise-free age of a disc of radius `r` (fraction of the side).
    pub fn age_for(&self, r: f64, male: bool) -> f64 {
        let (r0, r1) = self.radius_range;
        let (a0, a1) = self.age_range;
        let base = a0 + (a1 - a0) * (r - r0) / (r1 - r0);
        base + if male { self.gender_offset } else { 0.0 }
    }
}

/// Generate `n` cases. Roles follow `split_indices(n, spec.seed)` (all train when
/// `n < 10`), so splitting the output with the same seed separates the roles.
pub fn make_synthetic(spec: &SyntheticSpec, n: usize) -> Result<Vec<SyntheticCase>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Dataset("synthetic dataset needs n >= 1".into()));
    }
    let mut roles = vec![SplitRole::Train; n];
    if n >= 10 {
        for i in split_indices(n, spec.seed)?.1 {
            roles[i] = SplitRole::Validation;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_DA7A);
    let noise = Normal::new(0.0, spec.label_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let (amin, amax) = (spec.age_range.0, spec.age_range.1 + spec.gender_offset);
    (0..n)
        .map(|i| {
            let r = rng.random_range(spec.radius_range.0..=spec.radius_range.1);
            let male = rng.random_bool(0.5);
            let jitter = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let eps: f64 = if spec.label_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let age = (spec.age_for(r, male) + eps).max(0.0);
            let random_level = rng.random_range(spec.tag_intensity.0..=spec.tag_intensity.1);
            let corners = pick_corners(&mut rng, spec.tag_count);
            let bar = (rng.random_range(0..4usize), rng.random_range(0.3..0.45));
            let tag_intensity = match roles[i] {
                SplitRole::Train => {
                    let (lo, hi) = (spec.tag_intensity.0 as f64, spec.tag_intensity.1 as f64);
                    let t = ((age - amin) / (amax - amin)).clamp(0.0, 1.0);
                    (lo + (hi - lo) * t).round() as u8
                }
                SplitRole::Validation => random_level,
            };
            let (image, hand, tags) = render(spec, r, jitter, &corners, tag_intensity, bar);
            Ok(SyntheticCase {
                image,
                sample: Sample::new(format!("syn{i:05}"), age, male)?,
                radius: r,
                hand,
                tags,
                tag_intensity,
                role: roles[i],
            })
        })
        .collect()
}

fn pick_corners<R: Rng>(rng: &mut R, count: usize) -> Vec<usize> {
    let mut corners = vec![0, 1, 2, 3];
    for i in 0..count.min(4) {
        let j = rng.random_range(i..4);
        corners.swap(i, j);
    }
    corners.truncate(count);
    corners
}

fn render(
    spec: &SyntheticSpec,
    r: f64,
    jitter: (f64, f64),
    corners: &[usize],
    tag_level: u8,
    bar: (usize, f64),
) -> (GrayImage, BinaryMask, BinaryMask) {
    let s = spec.image_size;
    let sf = s as f64;
    let radius = r * sf;
    let (cx, cy) = ((sf - 1.0) / 2.0 + jitter.0, (sf - 1.0) / 2.0 + jitter.1);
    // 4x4 supersampled disc coverage
    let disc = |x: usize, y: usize| -> f64 {
        let mut acc = 0.0;
        for sy in 0..4 {
            for sx in 0..4 {
                let px = x as f64 - 0.375 + sx as f64 * 0.25;
                let py = y as f64 - 0.375 + sy as f64 * 0.25;
                let d2 = ((px - cx).powi(2) + (py - cy).powi(2)) / (radius * radius);
                acc += if d2 <= 1.0 { DISC } else { BACKGROUND };
            }
        }
        acc / 16.0
    };
    let mut image = GrayImage::from_fn(s, s, |x, y| disc(x, y).round() as u8);
    let hand = BinaryMask::from_fn(s, s, |x, y| {
        (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= radius * radius
    });

    let mut tags = BinaryMask::empty(s, s);
    let (tw, th) = ((0.14 * sf).round() as usize, (0.09 * sf).round() as usize);
    let margin = (0.03 * sf).round() as usize;
    for &c in corners {
        let x0 = if c % 2 == 0 { margin } else { s - margin - tw };
        let y0 = if c / 2 == 0 { margin } else { s - margin - th };
        for y in y0..y0 + th {
            for x in x0..x0 + tw {
                image.set(x, y, tag_level);
                tags.set(x, y, true);
            }
        }
    }

    if spec.border_bars {
        let len = (0.25 * sf).round() as usize;
        let start = (bar.1 * sf).round() as usize;
        for k in start..start + len {
            for t in 0..2 {
                let (x, y) = match bar.0 {
                    0 => (k, t),
                    1 => (k, s - 1 - t),
                    2 => (t, k),
                    _ => (s - 1 - t, k),
                };
                image.set(x, y, BAR_INTENSITY);
            }
        }
    }
    (image, hand, tags)
}

/// Pearson correlation of two equal-length series; 0 when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlations(cases: &[SyntheticCase]) -> (f64, f64) {
        let by_role = |role| {
            let (t, a): (Vec<f64>, Vec<f64>) = cases
                .iter()
                .filter(|c| c.role == role)
                .map(|c| (c.tag_intensity as f64, c.sample.age_months))
                .unzip();
            pearson(&t, &a)
        };
        (by_role(SplitRole::Train), by_role(SplitRole::Validation))
    }

    #[test]
    fn tags_correlate_only_on_train_side() {
        let spec = SyntheticSpec { gender_offset: 24.0, label_noise: 3.0, ..Default::default() };
        let cases = make_synthetic(&spec, 1000).unwrap();
        let (train, val) = correlations(&cases);
        assert!(train > 0.8, "train correlation {train}");
        assert!(val.abs() < 0.2, "val correlation {val}");
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec::default();
        assert_eq!(make_synthetic(&spec, 12).unwrap(), make_synthetic(&spec, 12).unwrap());
        let other = SyntheticSpec { seed: 1, ..Default::default() };
        assert_ne!(make_synthetic(&spec, 12).unwrap(), make_synthetic(&other, 12).unwrap());
    }

    #[test]
    fn roles_match_split() {
        let spec = SyntheticSpec { seed: 9, ..Default::default() };
        let cases = make_synthetic(&spec, 50).unwrap();
        let (_, val) = split_indices(50, 9).unwrap();
        for (i, c) in cases.iter().enumerate() {
            assert_eq!(c.role == SplitRole::Validation, val.contains(&i));
        }
    }

    #[test]
    fn untagged_label_follows_radius() {
        let spec = SyntheticSpec { tag_count: 0, border_bars: false, ..Default::default() };
        for c in make_synthetic(&spec, 30).unwrap() {
            assert!(c.tags.is_empty());
            let want = spec.age_for(c.radius, c.sample.male);
            assert!((c.sample.age_months - want).abs() < 1e-9);
            // the disc is the only bright structure: its area tracks the radius
            let bright = c.image.pixels().iter().filter(|&&p| p > 85).count() as f64;
            let area = std::f64::consts::PI * (c.radius * 64.0).powi(2);
            assert!((bright - area).abs() / area < 0.1, "{bright} vs {area}");
        }
    }

    #[test]
    fn age_mapping_is_increasing() {
        let spec = SyntheticSpec::default();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=20 {
            let r = 0.22 + 0.16 * k as f64 / 20.0;
            let a = spec.age_for(r, false);
            assert!(a > prev);
            prev = a;
        }
        assert!(make_synthetic(&SyntheticSpec { tag_count: 5, ..Default::default() }, 3).is_err());
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 5.0]), 0.0);
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageproc::{resize_bilinear, segment_hand, BinaryMask, CannyParams, GrayImage};
use crate::tensor::{Scalar, Tensor};

/// One labelled radiograph.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub age_months: f64,
    pub male: bool,
}

impl Sample {
    pub fn new(id: impl Into<String>, age_months: f64, male: bool) -> Result<Self> {
        let id = id.into();
        if !(age_months.is_finite() && age_months >= 0.0) {
            return Err(Error::Dataset(format!("sample `{id}` has invalid age {age_months}")));
        }
        Ok(Sample { id, age_months, male })
    }

    /// Gender as the network's input feature: 1 for male, 0 for female.
    pub fn gender_value(&self) -> f64 {
        if self.male {
            1.0
        } else {
            0.0
        }
    }
}

/// Seeded 90/10 partition of `0..n`: (train, validation) positions.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::Dataset(format!("need at least 10 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = order.split_off(n * 9 / 10);
    Ok((order, val))
}

/// Seeded shuffle, then the first 90% for training and the rest for validation.
pub fn split_dataset<S: Clone>(items: &[S], seed: u64) -> Result<(Vec<S>, Vec<S>)> {
    let (train, val) = split_indices(items.len(), seed)?;
    Ok((
        train.iter().map(|&i| items[i].clone()).collect(),
        val.iter().map(|&i| items[i].clone()).collect(),
    ))
}

/// A sample ready for training: the (possibly masked) image at its native size
/// and the hand mask used for augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub sample: Sample,
}

/// Mask a radiograph (or, with segmentation off, keep it raw with a full mask).
pub fn prepare_sample(
    img: &GrayImage,
    sample: Sample,
    segmentation: bool,
    canny: &CannyParams,
) -> Result<PreparedSample> {
    let (image, mask) = if segmentation {
        segment_hand(img, canny)?
    } else {
        (img.clone(), BinaryMask::full(img.width(), img.height()))
    };
    Ok(PreparedSample { image, mask, sample })
}

pub fn prepare_all(
    data: &[(GrayImage, Sample)],
    segmentation: bool,
    canny: &CannyParams,
) -> Result<Vec<PreparedSample>> {
    data.iter()
        .map(|(img, s)| {
            prepare_sample(img, s.clone(), segmentation, canny).map_err(|e| match e {
                Error::EmptyForeground => Error::Dataset(format!("sample `{}`: {e}", s.id)),
                other => other,
            })
        })
        .collect()
}

/// Network input `[N, 1, S, S]` scaled to [0, 1]; images must already be `S x S`.
pub fn image_batch<T: Scalar>(images: &[GrayImage], size: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(images.len() * size * size);
    for img in images {
        if img.width() != size || img.height() != size {
            return Err(Error::shape("image_batch", &[img.height(), img.width()], &[size, size]));
        }
        data.extend(img.pixels().iter().map(|&p| T::from_f64(p as f64 / 255.0)));
    }
    Tensor::new(&[images.len(), 1, size, size], data)
}

/// `[N, 1]` gender column.
pub fn gender_batch<T: Scalar>(samples: &[&Sample]) -> Tensor<T> {
    let v: Vec<T> = samples.iter().map(|s| T::from_f64(s.gender_value())).collect();
    Tensor::new(&[samples.len(), 1], v).expect("column shape")
}

/// `[N, 1]` ages in months.
pub fn age_batch<T: Scalar>(samples: &[&Sample]) -> Tensor<T> {
    let v: Vec<T> = samples.iter().map(|s| T::from_f64(s.age_months)).collect();
    Tensor::new(&[samples.len(), 1], v).expect("column shape")
}

/// The image resized to the network input without augmentation.
pub fn eval_image(img: &GrayImage, size: usize) -> Result<GrayImage> {
    resize_bilinear(img, size, size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_partition() {
        let items: Vec<usize> = (0..100).collect();
        let (tr, va) = split_dataset(&items, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (90, 10));
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(split_dataset(&items, 3).unwrap(), (tr.clone(), va));
        assert_ne!(split_dataset(&items, 4).unwrap().0, tr);
        assert!(split_dataset(&items[..9], 0).is_err());
        assert_eq!(split_indices(16, 0).unwrap().0.len(), 14);
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::new("a", 12.5, true).is_ok());
        assert!(Sample::new("a", -1.0, true).is_err());
        assert!(Sample::new("a", f64::NAN, false).is_err());
    }

    #[test]
    fn unsegmented_preparation_keeps_raw_image() {
        let img = GrayImage::from_fn(8, 8, |x, y| (x * 9 + y) as u8);
        let s = Sample::new("x", 10.0, false).unwrap();
        let p = prepare_sample(&img, s, false, &CannyParams::default()).unwrap();
        assert_eq!(p.image, img);
        assert_eq!(p.mask.count(), 64);
    }

    #[test]
    fn batches_scale_pixels() {
        let imgs = [GrayImage::filled(2, 2, 255), GrayImage::filled(2, 2, 0)];
        let t: Tensor<f32> = image_batch(&imgs, 2).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2, 2]);
        assert_eq!(&t.data()[..5], &[1.0, 1.0, 1.0, 1.0, 0.0]);
        assert!(image_batch::<f32>(&imgs, 3).is_err());
    }
}

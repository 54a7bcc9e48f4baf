//! `id,boneage,male` index files and the image directory they point into.

use std::path::{Path, PathBuf};

use super::config::parse_bool;
use crate::error::{Error, Result};
use crate::imageproc::GrayImage;
use crate::io::load_gray;
use crate::training::Sample;

pub const INDEX_HEADER: [&str; 3] = ["id", "boneage", "male"];

/// Extensions tried, in order, when resolving an id to an image file.
pub const IMAGE_EXTENSIONS: [&str; 2] = ["pgm", "png"];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub image_dir: PathBuf,
    pub samples: Vec<Sample>,
}

impl DatasetIndex {
    pub fn parse(text: &str, image_dir: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Dataset(e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != INDEX_HEADER {
            return Err(Error::Dataset(format!(
                "index header must be `id,boneage,male`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let line = row + 2;
            let record = record.map_err(|e| Error::Dataset(format!("line {line}: {e}")))?;
            let (id, age, male) = (&record[0], &record[1], &record[2]);
            if id.is_empty() {
                return Err(Error::Dataset(format!("line {line}: empty id")));
            }
            let age: f64 = age
                .parse()
                .map_err(|_| Error::Dataset(format!("line {line}: bad boneage `{age}`")))?;
            let male = parse_bool(male)
                .ok_or_else(|| Error::Dataset(format!("line {line}: male must be true or false, got `{male}`")))?;
            samples.push(Sample::new(id, age, male)?);
        }
        Ok(DatasetIndex { image_dir: image_dir.to_path_buf(), samples })
    }

    pub fn load(index: &Path, image_dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(index)
            .map_err(|e| Error::Dataset(format!("{}: {e}", index.display())))?;
        Self::parse(&text, image_dir)
    }

    /// The single image file named after `id`.
    pub fn image_path(&self, id: &str) -> Result<PathBuf> {
        let found: Vec<PathBuf> = IMAGE_EXTENSIONS
            .iter()
            .map(|ext| self.image_dir.join(format!("{id}.{ext}")))
            .filter(|p| p.is_file())
            .collect();
        match found.as_slice() {
            [one] => Ok(one.clone()),
            [] => Err(Error::Dataset(format!("no image for `{id}` in {}", self.image_dir.display()))),
            _ => Err(Error::Dataset(format!("several images for `{id}` in {}", self.image_dir.display()))),
        }
    }

    pub fn load_image(&self, sample: &Sample) -> Result<GrayImage> {
        load_gray(&self.image_path(&sample.id)?)
    }

    pub fn load_all(&self) -> Result<Vec<(GrayImage, Sample)>> {
        self.samples
            .iter()
            .map(|s| Ok((self.load_image(s)?, s.clone())))
            .collect()
    }
}

pub fn format_index(samples: &[Sample]) -> String {
    let mut out = INDEX_HEADER.join(",") + "\n";
    for s in samples {
        out += &format!("{},{},{}\n", s.id, s.age_months, s.male);
    }
    out
}

//! Image files: binary PGM in and out, binary PPM out, PNG in with the `png` feature.

mod pnm;

pub use pnm::{decode_pgm, encode_pgm, encode_ppm, read_pgm, write_pgm, write_ppm};

use std::path::Path;

use crate::error::{Error, Result};
use crate::imageproc::GrayImage;

/// Read a grayscale radiograph. PGM is always supported; PNG needs the `png` feature.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes).map_err(|e| relabel(e, path));
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes, path);
    }
    Err(Error::Format {
        path: path.to_path_buf(),
        msg: "unrecognized image format (expected binary PGM or PNG)".into(),
    })
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::InvalidArgument { msg, .. } => Error::Format { path: path.to_path_buf(), msg },
        other => other,
    }
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?
        .into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(w as usize, h as usize, img.into_raw())
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8], path: &Path) -> Result<GrayImage> {
    Err(Error::Format {
        path: path.to_path_buf(),
        msg: "PNG input needs the `png` feature".into(),
    })
}

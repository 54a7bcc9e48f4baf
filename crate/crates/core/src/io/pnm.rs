use std::path::Path;

use crate::error::{Error, Result};
use crate::imageproc::{GrayImage, RgbImage};

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!("missing {} magic", String::from_utf8_lossy(magic)));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments may precede each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text.parse().map_err(|_| format!("bad header field at byte {start}"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("header not terminated by whitespace".into());
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if !(1..=65535).contains(&maxval) {
        return Err(format!("maxval {maxval} out of range"));
    }
    Ok(Header {
        width,
        height,
        maxval: maxval as u32,
        data_start: pos + 1,
    })
}

/// Decode a binary (P5) PGM. 16-bit rasters and maxvals other than 255 are
/// rescaled to 0..=255 with rounding.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes, b"P5").map_err(|m| Error::invalid("pgm", m))?;
    let n = h.width * h.height;
    let depth = if h.maxval > 255 { 2 } else { 1 };
    let raster = &bytes[h.data_start..];
    if raster.len() < n * depth {
        return Err(Error::invalid("pgm", format!("raster has {} bytes, need {}", raster.len(), n * depth)));
    }
    let max = h.maxval as u64;
    let pixels = (0..n)
        .map(|i| {
            let v = if depth == 2 {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u64
            } else {
                raster[i] as u64
            };
            if v > max {
                return Err(Error::invalid("pgm", format!("sample {v} exceeds maxval {max}")));
            }
            Ok(if max == 255 { v as u8 } else { ((v * 255 + max / 2) / max) as u8 })
        })
        .collect::<Result<Vec<u8>>>()?;
    GrayImage::new(h.width, h.height, pixels)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().flatten());
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?).map_err(|e| match e {
        Error::InvalidArgument { msg, .. } => Error::Format { path: path.to_path_buf(), msg },
        other => other,
    })
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    Ok(std::fs::write(path, encode_pgm(img))?)
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    Ok(std::fs::write(path, encode_ppm(img))?)
}

/// Minimal P6 reader for tests.
#[cfg(test)]
pub(crate) fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let h = parse_header(bytes, b"P6").map_err(|m| Error::invalid("ppm", m))?;
    let raster = &bytes[h.data_start..];
    let px = raster
        .chunks_exact(3)
        .take(h.width * h.height)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    RgbImage::new(h.width, h.height, px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_with_comments() {
        let bytes = b"P5\n# made by hand\n3 2 # width height\n255\n\x00\x01\x02\x03\x04\x05";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixels(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn sixteen_bit_is_rescaled() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0xFF, 0xFF, 0x80, 0x00]);
        assert_eq!(decode_pgm(&bytes).unwrap().pixels(), &[255, 128]);
        let low = b"P5 2 1 15\n\x0f\x07";
        assert_eq!(decode_pgm(low).unwrap().pixels(), &[255, 119]);
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(decode_pgm(b"P6 1 1 255\n\x00").is_err());
        assert!(decode_pgm(b"P5 2 2 255\n\x00").is_err());
        assert!(decode_pgm(b"P5 0 2 255\n").is_err());
        assert!(decode_pgm(b"P5 1 1 15\n\x20").is_err());
        assert!(decode_pgm(b"P5 1 1").is_err());
    }

    #[test]
    fn ppm_layout() {
        let img = RgbImage::new(2, 1, vec![[1, 2, 3], [4, 5, 6]]).unwrap();
        let bytes = encode_ppm(&img);
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[1, 2, 3, 4, 5, 6]);
        assert_eq!(decode_ppm(&bytes).unwrap(), img);
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |x, y| (seed.wrapping_mul(31 + x as u64 * 7 + y as u64 * 13) >> 56) as u8);
            let bytes = encode_pgm(&img);
            prop_assert_eq!(decode_pgm(&bytes).unwrap(), img);
        }
    }
}

use super::GrayImage;

/// Intensity mapping `v -> round((cdf(v) - cdf_min) / (N - cdf_min) * 255)`, or the
/// identity for a constant image.
pub fn equalization_lut(img: &GrayImage) -> [u8; 256] {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let total = img.pixels().len() as u64;
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let mut lut = [0u8; 256];
    if total == cdf_min {
        for (v, l) in lut.iter_mut().enumerate() {
            *l = v as u8;
        }
        return lut;
    }
    let denom = total - cdf_min;
    for (v, l) in lut.iter_mut().enumerate() {
        let num = cdf[v].saturating_sub(cdf_min);
        // round-half-up of num * 255 / denom in integer arithmetic
        *l = ((2 * num * 255 + denom) / (2 * denom)).min(255) as u8;
    }
    lut
}

/// Classic CDF histogram equalization.
pub fn histogram_equalize(img: &GrayImage) -> GrayImage {
    let lut = equalization_lut(img);
    let mut out = img.clone();
    out.pixels_mut().iter_mut().for_each(|p| *p = lut[*p as usize]);
    out
}

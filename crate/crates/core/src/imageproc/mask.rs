use super::{BinaryMask, GrayImage};
use crate::error::{Error, Result};

/// Morphological closing with a 3x3 square (dilation then erosion), evaluated as if
/// the raster were embedded in an unbounded background plane.
pub fn close3x3(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let dilated = |x: isize, y: isize| {
        (y - 1..=y + 1).any(|ny| {
            (x - 1..=x + 1)
                .any(|nx| nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as usize, ny as usize))
        })
    };
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        (y - 1..=y + 1).all(|ny| (x - 1..=x + 1).all(|nx| dilated(nx, ny)))
    })
}

/// 8-connected component labels (0 = background, components numbered from 1 in
/// row-major order of their first pixel) and the size of each component.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Set every background pixel not 4-connected to the raster border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if border && !mask.get(x, y) {
                outside[y * w + x] = true;
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        let nbrs = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for (nx, ny) in nbrs {
            if nx < w && ny < h && !outside[ny * w + nx] && !mask.get(nx, ny) {
                outside[ny * w + nx] = true;
                stack.push((nx, ny));
            }
        }
    }
    BinaryMask::from_fn(w, h, |x, y| !outside[y * w + x])
}

/// Hand mask from an edge map: bridge 1-px gaps with a 3x3 closing, keep the
/// largest 8-connected region (first in row-major order on ties), fill its holes.
pub fn largest_component_mask(edges: &BinaryMask, img: &GrayImage) -> Result<BinaryMask> {
    if !edges.same_dims(img) {
        return Err(Error::shape(
            "largest_component_mask",
            &[edges.height(), edges.width()],
            &[img.height(), img.width()],
        ));
    }
    if edges.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let closed = close3x3(edges);
    let (labels, sizes) = label_components(&closed);
    let mut best = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    let keep = best as u32 + 1;
    let (w, h) = (edges.width(), edges.height());
    let component = BinaryMask::from_fn(w, h, |x, y| labels[y * w + x] == keep);
    Ok(fill_holes(&component))
}

/// Zero every pixel outside `mask`.
pub fn apply_mask(img: &GrayImage, mask: &BinaryMask) -> Result<GrayImage> {
    if !mask.same_dims(img) {
        return Err(Error::shape(
            "apply_mask",
            &[img.height(), img.width()],
            &[mask.height(), mask.width()],
        ));
    }
    let mut out = img.clone();
    for (p, &keep) in out.pixels_mut().iter_mut().zip(mask.bits()) {
        if !keep {
            *p = 0;
        }
    }
    Ok(out)
}

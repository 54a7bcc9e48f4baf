//! Segment a synthetic radiograph: equalize, detect edges, keep the largest
//! blob and zero everything else. Writes PGMs into the given directory
//! (default: the system temp dir).

use std::path::PathBuf;

use boneage::imageproc::{canny_auto, hand_mask, histogram_equalize, segment_hand, CannyParams};
use boneage::io::write_pgm;
use boneage::training::{make_synthetic, SyntheticSpec};

fn main() -> boneage::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("boneage_preprocess"));
    std::fs::create_dir_all(&dir)?;

    let spec = SyntheticSpec { image_size: 128, tag_count: 3, seed: 7, ..SyntheticSpec::default() };
    let case = make_synthetic(&spec, 1)?.remove(0);
    let params = CannyParams::default();

    let equalized = histogram_equalize(&case.image);
    let edges = canny_auto(&equalized, &params)?;
    let mask = hand_mask(&case.image, &params)?;
    let (masked, _) = segment_hand(&case.image, &params)?;

    write_pgm(&dir.join("input.pgm"), &case.image)?;
    write_pgm(&dir.join("equalized.pgm"), &equalized)?;
    write_pgm(&dir.join("edges.pgm"), &edges.to_image())?;
    write_pgm(&dir.join("mask.pgm"), &mask.to_image())?;
    write_pgm(&dir.join("masked.pgm"), &masked)?;

    let tag_left = (0..case.tags.height())
        .flat_map(|y| (0..case.tags.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| case.tags.get(x, y) && masked.get(x, y) != 0)
        .count();
    println!("mask IoU with the true hand: {:.3}", mask.iou(&case.hand));
    println!("tag pixels surviving the mask: {tag_left} of {}", case.tags.count());
    println!("wrote images to {}", dir.display());
    Ok(())
}

//! Region pooling and the detection-head losses.

mod loss;
mod roi;

pub use loss::{box_loss, cls_loss, composite_loss, mask_loss};
pub use roi::{roi_align, RoiBox, DEFAULT_SAMPLES_PER_BIN};

use crate::error::{Error, Result};
use crate::imageproc::BinaryMask;

/// Ground truth for one detected object.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionTarget {
    pub class: usize,
    pub bbox: RoiBox,
    pub mask: BinaryMask,
}

impl DetectionTarget {
    /// Checks that `mask` has the mask head's `(width, height)`.
    pub fn new(
        class: usize,
        bbox: RoiBox,
        mask: BinaryMask,
        mask_resolution: (usize, usize),
    ) -> Result<Self> {
        if (mask.width(), mask.height()) != mask_resolution {
            return Err(Error::shape(
                "detection_target",
                &[mask.height(), mask.width()],
                &[mask_resolution.1, mask_resolution.0],
            ));
        }
        Ok(DetectionTarget { class, bbox, mask })
    }
}

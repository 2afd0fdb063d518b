//! Post-hoc optimization of segmentation outputs: threshold search,
//! test-time augmentation, snapshot selection/averaging and the cyclic
//! learning-rate schedule used to harvest snapshots.

mod files;
mod schedule;
mod snapshot;
mod synthetic;
mod threshold;
mod tta;

pub use files::MapLookupPredictor;
pub use schedule::{cyclic_lr, LrSchedule};
pub use snapshot::{
    average_maps, average_topk, rank_by_iou, rank_snapshots, select_tta, tta_maps, MethodScore,
    Snapshot, SnapshotSet, TtaSelection,
};
pub use synthetic::{box_blur, image_fingerprint, synthetic_predictor, SyntheticPredictor};
pub use threshold::{pooled_counts_by_threshold, threshold_search, ThresholdGrid, ThresholdResult};
pub use tta::{
    canonical_transforms, tta_aggregate, tta_expand, tta_predict, tta_transforms, TtaCopy,
    TtaMethod, TtaPart, TtaPrediction, ROTATION_DEGREES, SHIFT_PIXELS,
};

use crate::error::Result;
use crate::raster::GrayImage;

/// Single-image inference: returns a probability map with the input's
/// dimensions.
pub trait Predictor: Send + Sync {
    fn predict(&self, image: &GrayImage) -> Result<GrayImage>;
}

impl<F> Predictor for F
where
    F: Fn(&GrayImage) -> Result<GrayImage> + Send + Sync,
{
    fn predict(&self, image: &GrayImage) -> Result<GrayImage> {
        self(image)
    }
}

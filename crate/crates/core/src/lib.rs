//! Post-model evaluation toolkit for fine-grained lesion segmentation on
//! chest radiographs.
//!
//! The crate covers everything that happens around a segmentation network:
//!
//! - [`raster`]: unit-interval rasters, bicubic resampling, invertible
//!   flip/shift/rotate transforms, padding and the jet colormap.
//! - [`cohort`]: the dataset manifest, patient-level splitting, mask
//!   binarization, cohort statistics and the averaged-mask heatmap.
//! - [`preprocess`]: lung-ROI cropping, resolution ladders and
//!   aspect-ratio correction.
//! - [`metrics`]: IoU/Dice, windowed SSIM with quality maps, SRE and
//!   Clopper-Pearson intervals.
//! - [`optimize`]: threshold grid search, test-time augmentation,
//!   snapshot ranking/averaging and the cyclic learning-rate schedule.
//! - [`io`]: PNG interchange for images, masks and probability maps.
//!
//! Model inference stays outside the crate; predictions come in through the
//! [`optimize::Predictor`] trait or as 16-bit probability PNGs.

pub mod cohort;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optimize;
pub mod preprocess;
pub mod raster;
pub mod rng;

pub use error::{Error, Result};
pub use raster::{BinaryMask, GeomTransform, GrayImage, RgbImage, TransformKind, ValidityMask};

//! Segmentation quality metrics.
//!
//! Pixel-wise overlap ([`iou`], [`dice`]) derives from pooled or per-image
//! [`ConfusionCounts`]. Image-wise similarity is the windowed [`ssim`] with
//! its quality map and the signal-to-reconstruction error ratio [`sre`].
//! [`clopper_pearson`] attaches exact binomial intervals to headline IoU.

mod confusion;
mod interval;
mod set;
mod ssim;

pub use confusion::{confusion, dice, iou, ConfusionCounts};
pub use interval::{beta_quantile, clopper_pearson, CpInterval};
pub use set::{evaluate_set, format_with_ci, ImageMetrics, SetMetrics, DEFAULT_CI_LEVEL};
pub use ssim::{gaussian_window, ssim, ScalarField, SsimParams, SsimResult};

use crate::error::Result;
use crate::raster::{ensure_same_dims, GrayImage};

/// Signal-to-reconstruction error ratio in decibels,
/// `10 log10(mean(gt)^2 / mse(gt, pred))`.
///
/// Zero error yields `+inf`; an all-zero `gt` with nonzero error yields
/// `-inf`.
pub fn sre(gt: &GrayImage, pred: &GrayImage) -> Result<f64> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    let n = gt.len() as f64;
    let mu = gt.mean();
    let mse = gt
        .pixels()
        .iter()
        .zip(pred.pixels())
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    if mu == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (mu * mu / mse).log10())
}

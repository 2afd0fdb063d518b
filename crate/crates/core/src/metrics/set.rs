use rayon::prelude::*;
use serde::Serialize;

use super::{
    clopper_pearson, confusion, dice, iou, sre, ssim, ConfusionCounts, CpInterval, SsimParams,
};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayImage};

pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Clone, Debug, Serialize)]
pub struct ImageMetrics {
    pub counts: ConfusionCounts,
    pub iou: f64,
    pub dice: f64,
    /// Both masks empty; IoU and Dice were set to 1 by convention.
    pub empty_agreement: bool,
    pub ssim: f64,
    pub sre: f64,
}

/// Metrics over an evaluation set.
///
/// `iou`/`dice` are micro (pooled confusion) values and carry the interval;
/// `macro_*` average per-image values. `sre` averages finite values only;
/// infinite ones are counted in `sre_pos_inf` / `sre_neg_inf`.
#[derive(Clone, Debug, Serialize)]
pub struct SetMetrics {
    pub n: usize,
    pub pooled: ConfusionCounts,
    pub iou: f64,
    pub dice: f64,
    pub ci: CpInterval,
    pub macro_iou: f64,
    pub macro_dice: f64,
    pub ssim: f64,
    /// `NaN` when every image had an infinite SRE.
    pub sre: f64,
    pub sre_pos_inf: usize,
    pub sre_neg_inf: usize,
    pub empty_agreements: usize,
    pub per_image: Vec<ImageMetrics>,
}

/// Evaluates aligned predictions. `images` holds the `(ground truth,
/// prediction)` intensity pairs used for SSIM and SRE.
pub fn evaluate_set(
    preds: &[BinaryMask],
    gts: &[BinaryMask],
    images: &[(GrayImage, GrayImage)],
    params: &SsimParams,
    level: f64,
) -> Result<SetMetrics> {
    if preds.len() != gts.len() || preds.len() != images.len() {
        return Err(Error::invalid(format!(
            "misaligned evaluation lists: {} predictions, {} ground truths, {} image pairs",
            preds.len(),
            gts.len(),
            images.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("evaluation set is empty".into()));
    }
    let per_image = preds
        .par_iter()
        .zip(gts.par_iter())
        .zip(images.par_iter())
        .map(|((p, g), (a, b))| {
            let counts = confusion(p, g)?;
            Ok(ImageMetrics {
                counts,
                iou: iou(&counts),
                dice: dice(&counts),
                empty_agreement: counts.is_empty_agreement(),
                ssim: ssim(a, b, params)?.score,
                sre: sre(a, b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_image.len();
    let nf = n as f64;
    let pooled: ConfusionCounts = per_image.iter().map(|m| m.counts).sum();
    let micro_iou = iou(&pooled);
    let finite: Vec<f64> = per_image
        .iter()
        .map(|m| m.sre)
        .filter(|v| v.is_finite())
        .collect();
    Ok(SetMetrics {
        n,
        pooled,
        iou: micro_iou,
        dice: dice(&pooled),
        ci: clopper_pearson(micro_iou, n as u64, level)?,
        macro_iou: per_image.iter().map(|m| m.iou).sum::<f64>() / nf,
        macro_dice: per_image.iter().map(|m| m.dice).sum::<f64>() / nf,
        ssim: per_image.iter().map(|m| m.ssim).sum::<f64>() / nf,
        sre: if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        sre_pos_inf: per_image.iter().filter(|m| m.sre == f64::INFINITY).count(),
        sre_neg_inf: per_image
            .iter()
            .filter(|m| m.sre == f64::NEG_INFINITY)
            .count(),
        empty_agreements: per_image.iter().filter(|m| m.empty_agreement).count(),
        per_image,
    })
}

/// `0.4859 (0.3561,0.6157)`.
pub fn format_with_ci(value: f64, ci: &CpInterval) -> String {
    format!("{value:.4} ({:.4},{:.4})", ci.lower, ci.upper)
}

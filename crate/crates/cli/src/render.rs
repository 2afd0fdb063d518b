//! Figure rendering: contour overlays and SSIM quality maps.

use maskpipe::metrics::{ssim, SsimParams};
use maskpipe::raster::jet_colormap;
use maskpipe::{BinaryMask, GrayImage, RgbImage};

use crate::error::CliResult;

pub const GT_COLOR: [f64; 3] = [1.0, 0.0, 0.0];
pub const PRED_COLOR: [f64; 3] = [0.0, 0.0, 1.0];
/// Overlays are rescaled to this square side for side-by-side comparison.
pub const DISPLAY_SIDE: usize = 256;

/// Foreground pixels with a 4-neighbor in the background. Pixels outside
/// the frame count as background, so shapes touching the border close.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let bg = |nx: isize, ny: isize| {
            nx < 0
                || ny < 0
                || nx >= w as isize
                || ny >= h as isize
                || !mask.get(nx as usize, ny as usize)
        };
        let (x, y) = (x as isize, y as isize);
        bg(x - 1, y) || bg(x + 1, y) || bg(x, y - 1) || bg(x, y + 1)
    })
    .expect("dims from a valid mask")
}

/// Ground-truth (red) and prediction (blue) contours over the grayscale
/// image, drawn at native resolution and then rescaled for display.
pub fn contour_overlay(
    image: &GrayImage,
    gt: &BinaryMask,
    pred: &BinaryMask,
) -> CliResult<RgbImage> {
    let mut rgb = RgbImage::from_gray(image);
    for (mask, color) in [(gt, GT_COLOR), (pred, PRED_COLOR)] {
        let edge = boundary(mask);
        for y in 0..edge.height() {
            for x in 0..edge.width() {
                if edge.get(x, y) {
                    rgb.set(x, y, color);
                }
            }
        }
    }
    Ok(rgb.resample_bicubic(DISPLAY_SIDE, DISPLAY_SIDE)?)
}

/// Jet-colored SSIM quality map between ground truth and prediction, at the
/// evaluation resolution.
pub fn quality_map(gt: &BinaryMask, pred: &BinaryMask) -> CliResult<(f64, RgbImage)> {
    let r = ssim(&gt.to_image(), &pred.to_image(), &SsimParams::default())?;
    Ok((r.score, jet_colormap(&r.quality_map)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_boundary_is_its_ring() {
        let m =
            BinaryMask::from_fn(7, 7, |x, y| (1..=5).contains(&x) && (1..=5).contains(&y)).unwrap();
        let b = boundary(&m);
        assert_eq!(b.count_ones(), 16);
        assert!(!b.get(3, 3));
        assert!(b.get(1, 3) && b.get(5, 5));
        let full = BinaryMask::from_fn(4, 3, |_, _| true).unwrap();
        assert_eq!(boundary(&full).count_ones(), 10);
    }

    #[test]
    fn overlay_colors_and_size() {
        let img = GrayImage::filled(16, 16, 0.5).unwrap();
        let gt = BinaryMask::from_fn(16, 16, |x, y| (4..12).contains(&x) && (4..12).contains(&y))
            .unwrap();
        let empty = BinaryMask::from_fn(16, 16, |_, _| false).unwrap();
        let out = contour_overlay(&img, &gt, &empty).unwrap();
        assert_eq!(out.dims(), (DISPLAY_SIDE, DISPLAY_SIDE));
        // Center of the GT ring's top edge maps to a reddish display pixel.
        let p = out.get(128, 4 * 16 + 8);
        assert!(p[0] > p[2], "{p:?}");
    }
}

use std::collections::HashMap;

use super::tta::canonical_transforms;
use super::Predictor;
use crate::error::{Error, Result};
use crate::raster::{
    apply_transform, clamp_unit, ensure_same_dims, BinaryMask, GeomTransform, GrayImage,
};
use crate::rng::{fingerprint, mix64, SplitMix64};

/// Content hash of an image: dimensions plus the exact pixel bits.
pub fn image_fingerprint(img: &GrayImage) -> u64 {
    fingerprint(
        [img.width() as u64, img.height() as u64]
            .into_iter()
            .chain(img.pixels().iter().map(|v| v.to_bits())),
    )
}

/// Mean over a `(2r+1)^2` window, clamp-to-edge.
pub fn box_blur(img: &GrayImage, radius: usize) -> GrayImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = img.dims();
    let r = radius as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for d in -r..=r {
                    let (sx, sy) = if horizontal {
                        ((x as isize + d).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + d).clamp(0, h as isize - 1) as usize)
                    };
                    acc += src[sy * w + sx];
                }
                out[y * w + x] = acc / (2 * radius + 1) as f64;
            }
        }
        out
    };
    let tmp = pass(img.pixels(), true);
    let out = pass(&tmp, false).into_iter().map(clamp_unit).collect();
    GrayImage::new(w, h, out).expect("dims preserved")
}

/// Deterministic stand-in for a trained model.
///
/// Recognizes registered fixture images, including every augmented copy
/// produced by TTA, and answers with the blurred ground truth moved into the
/// copy's frame, mixed with seeded uniform noise weighted by `1 - fidelity`.
#[derive(Clone, Debug)]
pub struct SyntheticPredictor {
    seed: u64,
    fidelity: f64,
    bases: Vec<GrayImage>,
    lookup: HashMap<u64, (usize, GeomTransform)>,
}

impl SyntheticPredictor {
    pub fn new(seed: u64, fidelity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fidelity) {
            return Err(Error::invalid(format!("fidelity {fidelity} outside [0,1]")));
        }
        Ok(Self {
            seed,
            fidelity,
            bases: Vec::new(),
            lookup: HashMap::new(),
        })
    }

    pub fn register(
        &mut self,
        image: &GrayImage,
        gt: &BinaryMask,
        blur_radius: usize,
    ) -> Result<()> {
        ensure_same_dims(image.dims(), gt.dims())?;
        let idx = self.bases.len();
        self.bases.push(box_blur(&gt.to_image(), blur_radius));
        for t in canonical_transforms() {
            let (copy, _) = apply_transform(image, &t)?;
            // First registration wins on collisions (e.g. symmetric images).
            self.lookup
                .entry(image_fingerprint(&copy))
                .or_insert((idx, t));
        }
        Ok(())
    }

    /// Same fixtures, different noise stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn fidelity(&self) -> f64 {
        self.fidelity
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }
}

impl Predictor for SyntheticPredictor {
    fn predict(&self, image: &GrayImage) -> Result<GrayImage> {
        let hash = image_fingerprint(image);
        let (idx, t) = self.lookup.get(&hash).ok_or(Error::UnknownImage)?;
        let (base, _) = apply_transform(&self.bases[*idx], t)?;
        let mut rng = SplitMix64::new(self.seed ^ mix64(hash));
        let f = self.fidelity;
        let pixels = base
            .pixels()
            .iter()
            .map(|&v| clamp_unit(f * v + (1.0 - f) * rng.next_f64()))
            .collect();
        GrayImage::new(base.width(), base.height(), pixels)
    }
}

pub fn synthetic_predictor(
    seed: u64,
    fidelity: f64,
    fixtures: &[(GrayImage, BinaryMask)],
    blur_radius: usize,
) -> Result<SyntheticPredictor> {
    let mut p = SyntheticPredictor::new(seed, fidelity)?;
    for (img, gt) in fixtures {
        p.register(img, gt, blur_radius)?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::{threshold_search, tta_expand, ThresholdGrid, TtaMethod};

    fn fixture(seed: u64, side: usize) -> (GrayImage, BinaryMask) {
        let mut rng = SplitMix64::new(seed);
        let img = GrayImage::from_fn(side, side, |_, _| rng.next_f64()).unwrap();
        let (cx, cy) = (side as f64 * 0.4, side as f64 * 0.55);
        let gt = BinaryMask::from_fn(side, side, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy < (side as f64 * 0.2).powi(2)
        })
        .unwrap();
        (img, gt)
    }

    #[test]
    fn perfect_fidelity_returns_gt() {
        let fx: Vec<_> = (0..3).map(|i| fixture(i, 32)).collect();
        let p = synthetic_predictor(9, 1.0, &fx, 0).unwrap();
        let maps: Vec<_> = fx.iter().map(|(i, _)| p.predict(i).unwrap()).collect();
        for (m, (_, gt)) in maps.iter().zip(&fx) {
            assert_eq!(*m, gt.to_image());
        }
        let gts: Vec<_> = fx.iter().map(|(_, g)| g.clone()).collect();
        assert_eq!(
            threshold_search(&maps, &gts, &ThresholdGrid::default())
                .unwrap()
                .iou,
            1.0
        );
    }

    #[test]
    fn recognizes_augmented_copies() {
        let fx = vec![fixture(1, 32)];
        let p = synthetic_predictor(9, 1.0, &fx, 0).unwrap();
        for c in tta_expand(&fx[0].0, TtaMethod::M8).unwrap() {
            let expected = apply_transform(&fx[0].1.to_image(), &c.transform)
                .unwrap()
                .0;
            assert_eq!(p.predict(&c.image).unwrap(), expected);
        }
        let stranger = GrayImage::filled(32, 32, 0.3).unwrap();
        assert!(matches!(p.predict(&stranger), Err(Error::UnknownImage)));
    }

    #[test]
    fn deterministic_per_seed() {
        let fx = vec![fixture(2, 24)];
        let a = synthetic_predictor(5, 0.6, &fx, 2).unwrap();
        let b = synthetic_predictor(5, 0.6, &fx, 2).unwrap();
        let c = synthetic_predictor(6, 0.6, &fx, 2).unwrap();
        let img = &fx[0].0;
        assert_eq!(a.predict(img).unwrap(), b.predict(img).unwrap());
        assert_ne!(a.predict(img).unwrap(), c.predict(img).unwrap());
    }

    #[test]
    fn zero_fidelity_is_near_prevalence() {
        let fx: Vec<_> = (0..6).map(|i| fixture(10 + i, 48)).collect();
        let p = synthetic_predictor(77, 0.0, &fx, 1).unwrap();
        let maps: Vec<_> = fx.iter().map(|(i, _)| p.predict(i).unwrap()).collect();
        let gts: Vec<_> = fx.iter().map(|(_, g)| g.clone()).collect();
        let ones: usize = gts.iter().map(|g| g.count_ones()).sum();
        let prevalence = ones as f64 / (6 * 48 * 48) as f64;
        let best = threshold_search(&maps, &gts, &ThresholdGrid::default()).unwrap();
        assert!(
            (best.iou - prevalence).abs() < 0.03,
            "{} vs {prevalence}",
            best.iou
        );
    }

    #[test]
    fn box_blur_preserves_constants_and_smooths() {
        let c = GrayImage::filled(7, 5, 0.25).unwrap();
        assert_eq!(box_blur(&c, 2), c);
        let mut px = vec![0.0; 25];
        px[12] = 1.0;
        let b = box_blur(&GrayImage::new(5, 5, px).unwrap(), 1);
        assert!((b.get(2, 2) - 1.0 / 9.0).abs() < 1e-15);
        assert!((b.pixels().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_fidelity() {
        assert!(SyntheticPredictor::new(0, 1.5).is_err());
    }
}

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{iou, ConfusionCounts};
use crate::raster::{ensure_same_dims, BinaryMask, GrayImage};

/// Equally spaced thresholds over the closed unit interval:
/// `values[k] = k / (count - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    pub const DEFAULT_COUNT: usize = 200;

    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid(format!(
                "threshold grid needs at least 2 points, got {count}"
            )));
        }
        let last = (count - 1) as f64;
        Ok(Self {
            values: (0..count).map(|k| k as f64 / last).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.values.len() - 1) as f64
    }

    /// Largest grid index whose value does not exceed `p`.
    fn bucket(&self, p: f64) -> usize {
        let last = self.values.len() - 1;
        let mut k = ((p * last as f64).floor().max(0.0) as usize).min(last);
        while k < last && p >= self.values[k + 1] {
            k += 1;
        }
        while k > 0 && p < self.values[k] {
            k -= 1;
        }
        k
    }
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self::new(Self::DEFAULT_COUNT).expect("default grid is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub index: usize,
    pub iou: f64,
    pub counts: ConfusionCounts,
}

/// Pooled confusion counts at every grid threshold (inclusive `p >= t`).
///
/// Each pixel is bucketed once by the last threshold it still passes, so the
/// whole grid costs one pass over the data plus a suffix sum.
pub fn pooled_counts_by_threshold(
    maps: &[GrayImage],
    gts: &[BinaryMask],
    grid: &ThresholdGrid,
) -> Result<Vec<ConfusionCounts>> {
    if maps.len() != gts.len() {
        return Err(Error::invalid(format!(
            "{} probability maps but {} ground truths",
            maps.len(),
            gts.len()
        )));
    }
    if maps.is_empty() {
        return Err(Error::Empty(
            "threshold search needs at least one image".into(),
        ));
    }
    let g = grid.len();
    let hists = maps
        .par_iter()
        .zip(gts.par_iter())
        .map(|(map, gt)| {
            ensure_same_dims(gt.dims(), map.dims())?;
            let mut pos = vec![0u64; g];
            let mut neg = vec![0u64; g];
            for (&p, &truth) in map.pixels().iter().zip(gt.bits()) {
                let k = grid.bucket(p);
                if truth {
                    pos[k] += 1;
                } else {
                    neg[k] += 1;
                }
            }
            Ok((pos, neg))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pos = vec![0u64; g];
    let mut neg = vec![0u64; g];
    for (p, n) in &hists {
        for k in 0..g {
            pos[k] += p[k];
            neg[k] += n[k];
        }
    }
    let total_pos: u64 = pos.iter().sum();
    let total_neg: u64 = neg.iter().sum();
    let mut out = vec![ConfusionCounts::default(); g];
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..g).rev() {
        tp += pos[k];
        fp += neg[k];
        out[k] = ConfusionCounts {
            tp,
            fp,
            fn_: total_pos - tp,
            tn: total_neg - fp,
        };
    }
    Ok(out)
}

/// Grid threshold maximizing pooled IoU; ties go to the smallest threshold.
pub fn threshold_search(
    maps: &[GrayImage],
    gts: &[BinaryMask],
    grid: &ThresholdGrid,
) -> Result<ThresholdResult> {
    let counts = pooled_counts_by_threshold(maps, gts, grid)?;
    let mut best = 0;
    let mut best_iou = iou(&counts[0]);
    for (k, c) in counts.iter().enumerate().skip(1) {
        let v = iou(c);
        if v > best_iou {
            best = k;
            best_iou = v;
        }
    }
    Ok(ThresholdResult {
        threshold: grid.values()[best],
        index: best,
        iou: best_iou,
        counts: counts[best],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::binarize;
    use crate::metrics::confusion;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    /// Binarize at every grid value and pool the counts directly.
    fn rescan(maps: &[GrayImage], gts: &[BinaryMask], grid: &ThresholdGrid) -> Vec<f64> {
        grid.values()
            .iter()
            .map(|&t| {
                let pooled: ConfusionCounts = maps
                    .iter()
                    .zip(gts)
                    .map(|(m, g)| confusion(&binarize(m, t), g).unwrap())
                    .sum();
                iou(&pooled)
            })
            .collect()
    }

    fn blob(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
        })
        .unwrap()
    }

    #[test]
    fn grid_structure() {
        let g = ThresholdGrid::default();
        assert_eq!(g.len(), 200);
        assert_eq!(g.values()[0], 0.0);
        assert_eq!(g.values()[199], 1.0);
        for k in 0..200 {
            assert_eq!(g.values()[k], k as f64 / 199.0);
        }
        assert!(g.values().windows(2).all(|w| w[0] < w[1]));
        assert!(ThresholdGrid::new(1).is_err());
    }

    #[test]
    fn buckets_agree_with_comparisons() {
        let g = ThresholdGrid::default();
        let mut rng = SplitMix64::new(4);
        let mut probes: Vec<f64> = g.values().to_vec();
        probes.extend(g.values().iter().map(|v| (v - 1e-17).max(0.0)));
        probes.extend((0..2000).map(|_| rng.next_f64()));
        for p in probes {
            let k = g.bucket(p);
            assert!(p >= g.values()[k]);
            assert!(k == 199 || p < g.values()[k + 1]);
        }
    }

    #[test]
    fn scaled_ground_truth() {
        let gt = blob(32, 32, 16.0, 16.0, 6.0);
        let map = gt.to_image().map(|v| 0.6 * v);
        let r = threshold_search(
            std::slice::from_ref(&map),
            std::slice::from_ref(&gt),
            &ThresholdGrid::default(),
        )
        .unwrap();
        assert_eq!(r.index, 1);
        assert_eq!(r.threshold, 1.0 / 199.0);
        assert_eq!(r.iou, 1.0);
        let scan = rescan(&[map], &[gt], &ThresholdGrid::default());
        // IoU is 1 exactly for k = 1..=119 (119/199 <= 0.6 < 120/199).
        for (k, v) in scan.iter().enumerate() {
            assert_eq!(*v == 1.0, (1..=119).contains(&k), "k={k}");
        }
    }

    #[test]
    fn all_zero_maps_pick_zero() {
        let gt = blob(20, 20, 10.0, 10.0, 4.0);
        let map = GrayImage::filled(20, 20, 0.0).unwrap();
        let r =
            threshold_search(&[map], std::slice::from_ref(&gt), &ThresholdGrid::default()).unwrap();
        assert_eq!(r.threshold, 0.0);
        assert!((r.iou - gt.count_ones() as f64 / 400.0).abs() < 1e-15);
    }

    #[test]
    fn counts_match_direct_binarization() {
        let mut rng = SplitMix64::new(12);
        let gts: Vec<_> = (0..4)
            .map(|i| blob(24, 18, 8.0 + i as f64, 9.0, 5.0))
            .collect();
        let maps: Vec<_> = gts
            .iter()
            .map(|g| {
                GrayImage::from_fn(24, 18, |x, y| {
                    0.5 * g.get(x, y) as u8 as f64 + 0.5 * rng.next_f64()
                })
                .unwrap()
            })
            .collect();
        let grid = ThresholdGrid::new(37).unwrap();
        let fast = pooled_counts_by_threshold(&maps, &gts, &grid).unwrap();
        for (k, &t) in grid.values().iter().enumerate() {
            let direct: ConfusionCounts = maps
                .iter()
                .zip(&gts)
                .map(|(m, g)| confusion(&binarize(m, t), g).unwrap())
                .sum();
            assert_eq!(fast[k], direct);
        }
    }

    #[test]
    fn input_errors() {
        let grid = ThresholdGrid::default();
        assert!(threshold_search(&[], &[], &grid).is_err());
        let m = GrayImage::filled(4, 4, 0.1).unwrap();
        let g = blob(5, 4, 1.0, 1.0, 1.0);
        assert!(threshold_search(std::slice::from_ref(&m), &[g], &grid).is_err());
        assert!(threshold_search(&[m.clone(), m], &[blob(4, 4, 1.0, 1.0, 1.0)], &grid).is_err());
    }

    proptest! {
        #[test]
        fn returned_threshold_is_a_true_argmax(seed in any::<u64>(), noise in 0.0f64..1.0) {
            let mut rng = SplitMix64::new(seed);
            let gts: Vec<_> = (0..3).map(|i| blob(16, 16, 5.0 + 2.0 * i as f64, 8.0, 3.5)).collect();
            let maps: Vec<_> = gts
                .iter()
                .map(|g| GrayImage::from_fn(16, 16, |x, y| {
                    let s = if g.get(x, y) { 0.7 } else { 0.2 };
                    (1.0 - noise) * s + noise * rng.next_f64()
                }).unwrap())
                .collect();
            let grid = ThresholdGrid::default();
            let r = threshold_search(&maps, &gts, &grid).unwrap();
            let scan = rescan(&maps, &gts, &grid);
            prop_assert!(scan.iter().all(|&v| v <= r.iou));
            prop_assert_eq!(scan.iter().position(|&v| v == r.iou), Some(r.index));
        }
    }
}

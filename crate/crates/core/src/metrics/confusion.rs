use serde::Serialize;

use crate::error::Result;
use crate::raster::{ensure_same_dims, BinaryMask};

/// Pixel tallies of a prediction against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// No predicted and no true foreground.
    pub fn is_empty_agreement(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `tp / (tp + fp + fn)`; 1 when both masks are empty.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// `2tp / (2tp + fp + fn)`; 1 when both masks are empty.
pub fn dice(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn tallies() {
        let gt = BinaryMask::from_fn(10, 10, |x, _| x == 0).unwrap();
        assert_eq!(
            confusion(&gt, &gt).unwrap(),
            ConfusionCounts {
                tp: 10,
                fp: 0,
                fn_: 0,
                tn: 90
            }
        );
        let ones = BinaryMask::from_fn(2, 2, |_, _| true).unwrap();
        let zeros = BinaryMask::from_fn(2, 2, |_, _| false).unwrap();
        assert_eq!(
            confusion(&ones, &zeros).unwrap(),
            ConfusionCounts {
                tp: 0,
                fp: 4,
                fn_: 0,
                tn: 0
            }
        );
        let other = BinaryMask::from_fn(3, 2, |_, _| true).unwrap();
        assert!(confusion(&ones, &other).is_err());
    }

    #[test]
    fn hand_values() {
        assert_eq!(iou(&counts(10, 0, 0)), 1.0);
        assert_eq!(dice(&counts(10, 0, 0)), 1.0);
        assert_eq!(iou(&counts(1, 1, 2)), 0.25);
        assert_eq!(dice(&counts(1, 1, 2)), 0.4);
        assert_eq!(iou(&counts(0, 0, 0)), 1.0);
        assert_eq!(dice(&counts(0, 0, 0)), 1.0);
        assert_eq!(iou(&counts(0, 3, 0)), 0.0);
    }

    #[test]
    fn counts_cover_every_pixel() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..20 {
            let a = BinaryMask::from_fn(17, 9, |_, _| rng.next_f64() < 0.3).unwrap();
            let b = BinaryMask::from_fn(17, 9, |_, _| rng.next_f64() < 0.5).unwrap();
            assert_eq!(confusion(&a, &b).unwrap().total(), 17 * 9);
        }
    }

    proptest! {
        #[test]
        fn dice_iou_identity(tp in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000) {
            let c = counts(tp, fp, fn_);
            let j = iou(&c);
            prop_assert!((dice(&c) - 2.0 * j / (1.0 + j)).abs() <= 1e-12);
        }

        #[test]
        fn dropping_foreground_never_raises_iou(bits in proptest::collection::vec(any::<bool>(), 64), drop in proptest::collection::vec(any::<bool>(), 64)) {
            let gt = BinaryMask::new(8, 8, bits.clone()).unwrap();
            let degraded = BinaryMask::new(8, 8, bits.iter().zip(&drop).map(|(&b, &d)| b && !d).collect()).unwrap();
            let perfect = iou(&confusion(&gt, &gt).unwrap());
            prop_assert!(iou(&confusion(&degraded, &gt).unwrap()) <= perfect);
        }
    }
}

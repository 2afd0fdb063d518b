use serde::Serialize;

use crate::error::{Error, Result};

/// Cyclic cosine learning-rate schedule for snapshot harvesting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LrSchedule {
    pub alpha0: f64,
    pub alpha_min: f64,
    pub total_epochs: usize,
    pub cycles: usize,
}

impl LrSchedule {
    pub fn new(alpha0: f64, alpha_min: f64, total_epochs: usize, cycles: usize) -> Result<Self> {
        if !(alpha_min > 0.0 && alpha0 > alpha_min && alpha0.is_finite()) {
            return Err(Error::invalid(format!(
                "need alpha0 > alpha_min > 0, got alpha0={alpha0}, alpha_min={alpha_min}"
            )));
        }
        if cycles == 0 || !total_epochs.is_multiple_of(cycles) {
            return Err(Error::invalid(format!(
                "total epochs {total_epochs} not divisible by {cycles} cycles"
            )));
        }
        if total_epochs / cycles < 2 {
            return Err(Error::invalid("each cycle needs at least 2 epochs"));
        }
        Ok(Self {
            alpha0,
            alpha_min,
            total_epochs,
            cycles,
        })
    }

    /// 1e-2 down to 1e-8, 320 epochs, 8 cycles.
    pub fn snapshot_default() -> Self {
        Self::new(1e-2, 1e-8, 320, 8).expect("constants are valid")
    }

    pub fn cycle_len(&self) -> usize {
        self.total_epochs / self.cycles
    }

    /// Every epoch's rate, in order.
    pub fn rates(&self) -> Vec<f64> {
        (0..self.total_epochs)
            .map(|e| cyclic_lr(e, self).expect("epoch in range"))
            .collect()
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::snapshot_default()
    }
}

/// Rate at `epoch`: starts each cycle at `alpha0` and reaches `alpha_min`
/// exactly on the cycle's last epoch.
pub fn cyclic_lr(epoch: usize, sched: &LrSchedule) -> Result<f64> {
    if epoch >= sched.total_epochs {
        return Err(Error::invalid(format!(
            "epoch {epoch} outside 0..{}",
            sched.total_epochs
        )));
    }
    let len = sched.cycle_len();
    let ec = epoch % len;
    let cos = (std::f64::consts::PI * ec as f64 / (len - 1) as f64).cos();
    Ok(sched.alpha_min + (sched.alpha0 - sched.alpha_min) * (1.0 + cos) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let s = LrSchedule::snapshot_default();
        assert_eq!(s.cycle_len(), 40);
        assert_eq!(cyclic_lr(0, &s).unwrap(), 1e-2);
        assert_eq!(cyclic_lr(39, &s).unwrap(), 1e-8);
        assert_eq!(cyclic_lr(40, &s).unwrap(), 1e-2);
        assert_eq!(cyclic_lr(319, &s).unwrap(), 1e-8);
        assert!(cyclic_lr(320, &s).is_err());
    }

    #[test]
    fn periodic_bounded_decreasing_within_cycle() {
        let s = LrSchedule::snapshot_default();
        let r = s.rates();
        for e in 0..r.len() {
            assert!((1e-8..=1e-2).contains(&r[e]));
            if e + 40 < r.len() {
                assert_eq!(r[e], r[e + 40]);
            }
            if e % 40 != 39 {
                assert!(r[e + 1] < r[e]);
            }
        }
        // Midpoint of the cosine sits halfway between the bounds.
        let mid = 1e-8 + (1e-2 - 1e-8) * (1.0 + (std::f64::consts::PI * 20.0 / 39.0).cos()) / 2.0;
        assert_eq!(r[20], mid);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LrSchedule::new(1e-2, 1e-8, 321, 8).is_err());
        assert!(LrSchedule::new(1e-8, 1e-2, 320, 8).is_err());
        assert!(LrSchedule::new(1e-2, 0.0, 320, 8).is_err());
        assert!(LrSchedule::new(1e-2, 1e-8, 8, 8).is_err());
        assert!(LrSchedule::new(1e-2, 1e-8, 320, 0).is_err());
    }
}

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Exact binomial interval for a proportion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CpInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n: u64,
    /// Effective successes `p_hat * n`, not rounded.
    pub x: f64,
}

/// Quantile of the Beta(`a`, `b`) distribution, found by bisecting the
/// regularized incomplete beta function to machine precision.
pub fn beta_quantile(prob: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&prob) {
        return Err(Error::invalid(format!(
            "beta quantile({prob}; {a}, {b}) is undefined"
        )));
    }
    if prob == 0.0 {
        return Ok(0.0);
    }
    if prob == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Clopper-Pearson interval at confidence `level` for `p_hat` observed over
/// `n` trials. Successes are the real value `p_hat * n`, so the bounds are
/// the continuous extension via beta quantiles.
pub fn clopper_pearson(p_hat: f64, n: u64, level: f64) -> Result<CpInterval> {
    if n == 0 {
        return Err(Error::invalid("Clopper-Pearson needs at least one trial"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level {level} must lie in (0, 1)"
        )));
    }
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(Error::invalid(format!(
            "proportion {p_hat} must lie in [0, 1]"
        )));
    }
    let nf = n as f64;
    let x = p_hat * nf;
    let alpha = 1.0 - level;
    let lower = if x <= 0.0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, x, nf - x + 1.0)?
    };
    let upper = if x >= nf {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, x + 1.0, nf - x)?
    };
    Ok(CpInterval {
        lower,
        upper,
        level,
        n,
        x,
    })
}

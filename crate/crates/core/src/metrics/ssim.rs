use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{clamp_unit, ensure_same_dims, GrayImage};

/// Window and stabilizing constants for [`ssim`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SsimParams {
    /// Odd side of the square Gaussian window.
    pub window_side: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Exponent of the luminance term.
    pub alpha: f64,
    /// Exponent of the contrast term.
    pub beta: f64,
    /// Exponent of the structure term.
    pub gamma: f64,
    /// Dynamic range `L` of the intensities (1 for unit-interval images).
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_side: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_side < 3 || self.window_side.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "SSIM window side {} must be odd and at least 3",
                self.window_side
            )));
        }
        if !(self.k1 > 0.0
            && self.k2 > 0.0
            && self.dynamic_range > 0.0
            && self.gaussian_sigma > 0.0)
        {
            return Err(Error::invalid(
                "SSIM constants k1, k2, L and sigma must be positive",
            ));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn c3(&self) -> f64 {
        self.c2() / 2.0
    }
}

/// Real-valued raster without the unit-interval constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[derive(Clone, Debug)]
pub struct SsimResult {
    /// Mean of the map over window centers that fit inside the image.
    pub score: f64,
    /// Full-size per-pixel SSIM (edge-replicated outside the valid region).
    pub raw_map: ScalarField,
    /// `raw_map` clamped into `[0, 1]` for rendering.
    pub quality_map: GrayImage,
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(side: usize, sigma: f64) -> Vec<f64> {
    let r = (side / 2) as f64;
    let taps: Vec<f64> = (0..side)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Valid-mode separable filter: output is `(w - k + 1) x (h - k + 1)`.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (vw, vh) = (w - k + 1, h - k + 1);
    let mut horiz = vec![0.0; h * vw];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..vw {
            horiz[y * vw + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; vh * vw];
    for y in 0..vh {
        for x in 0..vw {
            out[y * vw + x] = taps
                .iter()
                .enumerate()
                .map(|(j, t)| t * horiz[(y + j) * vw + x])
                .sum();
        }
    }
    out
}

/// Structural similarity with local Gaussian-weighted statistics.
///
/// Per window: weighted means, variances and covariance (the latter two
/// carrying the `N / (N - 1)` sample correction, `N` = window pixels),
/// combined as `l^alpha * c^beta * s^gamma` with `C1 = (k1 L)^2`,
/// `C2 = (k2 L)^2`, `C3 = C2 / 2`.
pub fn ssim(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<SsimResult> {
    p.validate()?;
    ensure_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let k = p.window_side;
    if w < k || h < k {
        return Err(Error::invalid(format!(
            "image {w}x{h} is smaller than the {k}x{k} SSIM window"
        )));
    }
    let (vw, vh) = (w - k + 1, h - k + 1);

    let valid = if a == b {
        vec![1.0; vw * vh]
    } else {
        let taps = gaussian_window(k, p.gaussian_sigma);
        let (pa, pb) = (a.pixels(), b.pixels());
        let sq =
            |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| u * v).collect() };
        let mu_a = filter_valid(pa, w, h, &taps);
        let mu_b = filter_valid(pb, w, h, &taps);
        let e_aa = filter_valid(&sq(pa, pa), w, h, &taps);
        let e_bb = filter_valid(&sq(pb, pb), w, h, &taps);
        let e_ab = filter_valid(&sq(pa, pb), w, h, &taps);

        let n = (k * k) as f64;
        let bessel = n / (n - 1.0);
        let (c1, c2, c3) = (p.c1(), p.c2(), p.c3());
        (0..vw * vh)
            .map(|i| {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let var_a = ((e_aa[i] - ma * ma) * bessel).max(0.0);
                let var_b = ((e_bb[i] - mb * mb) * bessel).max(0.0);
                let cov = (e_ab[i] - ma * mb) * bessel;
                let sd_prod = (var_a * var_b).sqrt();
                let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                let c = (2.0 * sd_prod + c2) / (var_a + var_b + c2);
                let s = (cov + c3) / (sd_prod + c3);
                combine(l, c, s, p)
            })
            .collect()
    };

    let score = valid.iter().sum::<f64>() / valid.len() as f64;
    let half = k / 2;
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        let vy = y.saturating_sub(half).min(vh - 1);
        for x in 0..w {
            let vx = x.saturating_sub(half).min(vw - 1);
            values.push(valid[vy * vw + vx]);
        }
    }
    let quality_map =
        GrayImage::from_clamped(w, h, values.iter().map(|&v| clamp_unit(v)).collect());
    Ok(SsimResult {
        score,
        raw_map: ScalarField {
            width: w,
            height: h,
            values,
        },
        quality_map,
    })
}

#[inline]
fn combine(l: f64, c: f64, s: f64, p: &SsimParams) -> f64 {
    if p.alpha == 1.0 && p.beta == 1.0 && p.gamma == 1.0 {
        l * c * s
    } else {
        l.powf(p.alpha) * c.powf(p.beta) * s.powf(p.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    /// Direct per-window evaluation: explicit 2-D weights, two-pass
    /// moments, no shared intermediates.
    #[allow(clippy::needless_range_loop)]
    fn naive_ssim(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> (f64, Vec<f64>) {
        let k = p.window_side;
        let r = (k / 2) as f64;
        let mut wts = vec![vec![0.0; k]; k];
        let mut total = 0.0;
        for (j, row) in wts.iter_mut().enumerate() {
            for (i, wt) in row.iter_mut().enumerate() {
                let d2 = (i as f64 - r).powi(2) + (j as f64 - r).powi(2);
                *wt = (-d2 / (2.0 * p.gaussian_sigma.powi(2))).exp();
                total += *wt;
            }
        }
        let n = (k * k) as f64;
        let c1 = (p.k1 * p.dynamic_range).powi(2);
        let c2 = (p.k2 * p.dynamic_range).powi(2);
        let c3 = c2 / 2.0;
        let (w, h) = a.dims();
        let mut map = Vec::new();
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..k {
                    for i in 0..k {
                        let wt = wts[j][i] / total;
                        ma += wt * a.get(x0 + i, y0 + j);
                        mb += wt * b.get(x0 + i, y0 + j);
                    }
                }
                let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
                for j in 0..k {
                    for i in 0..k {
                        let wt = wts[j][i] / total;
                        let da = a.get(x0 + i, y0 + j) - ma;
                        let db = b.get(x0 + i, y0 + j) - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cab += wt * da * db;
                    }
                }
                va *= n / (n - 1.0);
                vb *= n / (n - 1.0);
                cab *= n / (n - 1.0);
                let (sa, sb) = (va.sqrt(), vb.sqrt());
                let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                let c = (2.0 * sa * sb + c2) / (va + vb + c2);
                let s = (cab + c3) / (sa * sb + c3);
                map.push(l.powf(p.alpha) * c.powf(p.beta) * s.powf(p.gamma));
            }
        }
        (map.iter().sum::<f64>() / map.len() as f64, map)
    }

    fn random_pair(seed: u64, w: usize, h: usize) -> (GrayImage, GrayImage) {
        let mut rng = SplitMix64::new(seed);
        let a = GrayImage::from_fn(w, h, |_, _| rng.next_f64()).unwrap();
        let b = GrayImage::from_fn(w, h, |x, y| 0.6 * a.get(x, y) + 0.4 * rng.next_f64()).unwrap();
        (a, b)
    }

    #[test]
    fn identical_images_score_one() {
        let (a, _) = random_pair(1, 20, 16);
        let r = ssim(&a, &a, &SsimParams::default()).unwrap();
        assert_eq!(r.score, 1.0);
        assert!(r.raw_map.values.iter().all(|&v| v == 1.0));
        assert_eq!(r.quality_map.dims(), (20, 16));
    }

    #[test]
    fn constant_black_vs_white() {
        let a = GrayImage::filled(16, 16, 0.0).unwrap();
        let b = GrayImage::filled(16, 16, 1.0).unwrap();
        let r = ssim(&a, &b, &SsimParams::default()).unwrap();
        let c1: f64 = 1e-4;
        let expect = c1 / (1.0 + c1);
        assert!((r.score - expect).abs() < 1e-9, "{}", r.score);
        assert!((r.score - 9.999e-5).abs() < 1e-8);
    }

    #[test]
    fn matches_naive_oracle() {
        let p = SsimParams::default();
        for seed in 0..10 {
            let (a, b) = random_pair(seed, 32, 32);
            let fast = ssim(&a, &b, &p).unwrap();
            let (score, map) = naive_ssim(&a, &b, &p);
            assert!((fast.score - score).abs() < 1e-9, "seed {seed}");
            // Interior pixel (x, y) corresponds to valid index (x - 5, y - 5).
            for y in 5..27 {
                for x in 5..27 {
                    assert!((fast.raw_map.get(x, y) - map[(y - 5) * 22 + (x - 5)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn non_unit_exponents_match_oracle() {
        let p = SsimParams {
            alpha: 2.0,
            beta: 0.5,
            gamma: 1.0,
            window_side: 7,
            gaussian_sigma: 1.0,
            ..SsimParams::default()
        };
        let (a, _) = random_pair(5, 24, 20);
        let b = a.map(|v| 0.2 + 0.7 * v);
        let fast = ssim(&a, &b, &p).unwrap();
        let (score, _) = naive_ssim(&a, &b, &p);
        assert!((fast.score - score).abs() < 1e-9);
    }

    #[test]
    fn map_edges_replicate() {
        let (a, b) = random_pair(9, 15, 13);
        let r = ssim(&a, &b, &SsimParams::default()).unwrap();
        assert_eq!(r.raw_map.get(0, 0), r.raw_map.get(5, 5));
        assert_eq!(r.raw_map.get(14, 12), r.raw_map.get(9, 7));
        assert_eq!(r.raw_map.get(0, 6), r.raw_map.get(5, 6));
    }

    #[test]
    fn rejects_small_images_and_bad_params() {
        let a = GrayImage::filled(10, 20, 0.5).unwrap();
        assert!(ssim(&a, &a, &SsimParams::default()).is_err());
        let even = SsimParams {
            window_side: 10,
            ..SsimParams::default()
        };
        let b = GrayImage::filled(20, 20, 0.5).unwrap();
        assert!(ssim(&b, &b, &even).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(seed in any::<u64>()) {
            let (a, b) = random_pair(seed, 16, 14);
            let p = SsimParams::default();
            let ab = ssim(&a, &b, &p).unwrap().score;
            let ba = ssim(&b, &a, &p).unwrap().score;
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12);
        }
    }
}

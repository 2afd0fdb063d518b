//! Independent reference implementations used by the test suites. Nothing
//! here calls into the code under test.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use maskpipe::{BinaryMask, GrayImage};

/// Direct-loop SSIM: explicit 2-D Gaussian weights per window, two-pass
/// weighted moments with the N/(N-1) correction, mean over valid windows.
#[allow(clippy::needless_range_loop)]
pub fn naive_ssim(a: &GrayImage, b: &GrayImage) -> f64 {
    const K: usize = 11;
    const SIGMA: f64 = 1.5;
    let c1 = (0.01f64 * 1.0).powi(2);
    let c2 = (0.03f64 * 1.0).powi(2);
    let c3 = c2 / 2.0;
    let r = (K / 2) as f64;
    let mut wts = [[0.0f64; K]; K];
    let mut total = 0.0;
    for (j, row) in wts.iter_mut().enumerate() {
        for (i, w) in row.iter_mut().enumerate() {
            *w = (-((i as f64 - r).powi(2) + (j as f64 - r).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
            total += *w;
        }
    }
    let n = (K * K) as f64;
    let (w, h) = a.dims();
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - K {
        for x0 in 0..=w - K {
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..K {
                for i in 0..K {
                    let wt = wts[j][i] / total;
                    ma += wt * a.get(x0 + i, y0 + j);
                    mb += wt * b.get(x0 + i, y0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..K {
                for i in 0..K {
                    let wt = wts[j][i] / total;
                    let (da, db) = (a.get(x0 + i, y0 + j) - ma, b.get(x0 + i, y0 + j) - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            let f = n / (n - 1.0);
            let (va, vb, cov) = (va * f, vb * f, cov * f);
            let (sa, sb) = (va.sqrt(), vb.sqrt());
            let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            let c = (2.0 * sa * sb + c2) / (va + vb + c2);
            let s = (cov + c3) / (sa * sb + c3);
            acc += l * c * s;
            count += 1;
        }
    }
    acc / count as f64
}

/// Pooled IoU at cut `t` (inclusive), computed pixel by pixel.
pub fn pooled_iou(maps: &[GrayImage], gts: &[BinaryMask], t: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (m, g) in maps.iter().zip(gts) {
        for (&p, &q) in m.pixels().iter().zip(g.bits()) {
            match (p >= t, q) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    let denom = tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        tp as f64 / denom as f64
    }
}

/// Exhaustive scan over `k / (count - 1)`; first maximum wins.
pub fn rescan(maps: &[GrayImage], gts: &[BinaryMask], count: usize) -> (f64, f64) {
    let mut best = (0.0, f64::MIN);
    for k in 0..count {
        let t = k as f64 / (count - 1) as f64;
        let iou = pooled_iou(maps, gts, t);
        if iou > best.1 {
            best = (t, iou);
        }
    }
    best
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta via its continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_inv(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reg_inc_beta(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper-Pearson bounds for `x` successes out of `n` (x may be real).
pub fn cp_oracle(x: f64, n: f64, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let lower = if x <= 0.0 {
        0.0
    } else {
        beta_inv(alpha / 2.0, x, n - x + 1.0)
    };
    let upper = if x >= n {
        1.0
    } else {
        beta_inv(1.0 - alpha / 2.0, x + 1.0, n - x)
    };
    (lower, upper)
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_maskpipe"))
}

/// Runs the CLI and returns (exit code, stdout, stderr).
pub fn maskpipe(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("MASKPIPE_THREADS", "2")
        .output()
        .expect("spawn maskpipe");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A fresh demo cohort under `dir/data`; returns the manifest path.
pub fn demo_cohort(dir: &Path, n: usize, seed: u64) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let data = dir.join("data");
    let (code, _, err) = maskpipe(
        &[
            "demo",
            "--out",
            data.to_str().unwrap(),
            "--n",
            &n.to_string(),
            "--seed",
            &seed.to_string(),
        ],
        dir,
    );
    assert_eq!(code, 0, "{err}");
    data.join("manifest.csv")
}

/// All CSV files under `dir`, keyed by relative path.
pub fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect()
        })
        .collect()
}

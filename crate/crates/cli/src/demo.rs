//! Synthetic cohort generator for trying the pipeline without real data.
//!
//! Each record gets a chest-like grayscale image, a two-lung mask and a
//! lesion mask inside the lungs. Every 25th record omits its lung mask so the
//! skip log has something to report.

use std::fs;
use std::path::Path;

use maskpipe::cohort::{write_manifest, Manifest, Record, Sex};
use maskpipe::io::{write_gray8, write_mask8};
use maskpipe::rng::{mix64, SplitMix64};
use maskpipe::{BinaryMask, GrayImage};

use crate::error::CliResult;

pub struct DemoRecord {
    pub image: GrayImage,
    pub lungs: BinaryMask,
    pub lesion: BinaryMask,
}

fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
    dx * dx + dy * dy <= 1.0
}

pub fn demo_record(seed: u64, index: usize) -> DemoRecord {
    let mut rng = SplitMix64::new(mix64(seed ^ mix64(index as u64 + 1)));
    let w = 160 + rng.below(48) as usize;
    let h = w + 16 + rng.below(40) as usize;
    let (wf, hf) = (w as f64, h as f64);
    let jitter = |rng: &mut SplitMix64| 0.9 + 0.2 * rng.next_f64();
    let lungs_geom = [
        (
            0.31 * wf,
            0.5 * hf,
            0.15 * wf * jitter(&mut rng),
            0.33 * hf * jitter(&mut rng),
        ),
        (
            0.69 * wf,
            0.5 * hf,
            0.15 * wf * jitter(&mut rng),
            0.33 * hf * jitter(&mut rng),
        ),
    ];
    let lungs = BinaryMask::from_fn(w, h, |x, y| {
        lungs_geom
            .iter()
            .any(|&(cx, cy, rx, ry)| in_ellipse(x as f64, y as f64, cx, cy, rx, ry))
    })
    .expect("positive dims");

    let blobs: Vec<(f64, f64, f64)> = (0..1 + rng.below(3))
        .map(|_| {
            let (cx, cy, rx, ry) = lungs_geom[rng.below(2) as usize];
            let a = rng.next_f64() * std::f64::consts::TAU;
            let r = 0.5 * rng.next_f64();
            let radius = wf * (0.03 + 0.05 * rng.next_f64());
            (cx + r * rx * a.cos(), cy + r * ry * a.sin(), radius)
        })
        .collect();
    let lesion = BinaryMask::from_fn(w, h, |x, y| {
        lungs.get(x, y)
            && blobs
                .iter()
                .any(|&(cx, cy, r)| in_ellipse(x as f64, y as f64, cx, cy, r, r * 1.2))
    })
    .expect("positive dims");

    let mut noise = SplitMix64::new(rng.next_u64());
    let image = GrayImage::from_fn(w, h, |x, y| {
        let mut v = 0.55 + 0.2 * y as f64 / hf;
        if lungs.get(x, y) {
            v -= 0.3;
        }
        if lesion.get(x, y) {
            v += 0.2;
        }
        v + 0.1 * (noise.next_f64() - 0.5)
    })
    .expect("positive dims");
    DemoRecord {
        image,
        lungs,
        lesion,
    }
}

/// Writes `n` records plus `manifest.csv` under `dir`.
pub fn write_demo(dir: &Path, n: usize, seed: u64) -> CliResult<()> {
    for sub in ["images", "lungs", "lesions"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut demo_rng = SplitMix64::new(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("P{i:03}");
        let rec = demo_record(seed, i);
        let cxr = dir.join("images").join(format!("{id}.png"));
        let tb = dir.join("lesions").join(format!("{id}.png"));
        write_gray8(&cxr, &rec.image)?;
        write_mask8(&tb, &rec.lesion)?;
        let lung_mask_path = if i % 25 == 24 {
            None
        } else {
            let p = dir.join("lungs").join(format!("{id}.png"));
            write_mask8(&p, &rec.lungs)?;
            Some(p)
        };
        records.push(Record {
            patient_id: id,
            sex: if demo_rng.below(3) < 2 {
                Sex::M
            } else {
                Sex::F
            },
            age: Some(18 + demo_rng.below(60) as u32),
            cxr_path: cxr,
            lung_mask_path,
            tb_mask_path: tb,
            native_width: rec.image.width(),
            native_height: rec.image.height(),
        });
    }
    write_manifest(&dir.join("manifest.csv"), &Manifest::new(records)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lesions_sit_inside_lungs_and_are_nonempty() {
        for i in 0..10 {
            let r = demo_record(1, i);
            assert!(r.lesion.count_ones() > 0);
            assert!(r.image.height() > r.image.width());
            for (l, s) in r.lesion.bits().iter().zip(r.lungs.bits()) {
                assert!(!l | s);
            }
        }
    }

    #[test]
    fn manifest_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        write_demo(dir.path(), 26, 3).unwrap();
        let m = maskpipe::cohort::load_manifest(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(m.len(), 26);
        assert!(m.records[24].lung_mask_path.is_none());
        assert!(m.records[0].lung_mask_path.is_some());
    }
}

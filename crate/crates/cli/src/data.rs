//! Turning manifest records into evaluation-ready samples.

use maskpipe::cohort::{binarize, patient_split, Manifest, Record, Split};
use maskpipe::io::{read_gray, read_mask, to_u8, MASK_CUT};
use maskpipe::preprocess::{build_ladder, crop_to_lungs, LadderSpec, Mode, Resolution, SamplePair};
use maskpipe::{BinaryMask, GrayImage};
use rayon::prelude::*;

use crate::error::CliResult;

/// One image at one resolution, as the model would see it.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    /// Quantized to 8 bits, matching what `prep` writes.
    pub image: GrayImage,
    pub gt: BinaryMask,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skip {
    pub patient_id: String,
    pub reason: String,
}

/// Samples grouped by resolution (outer index follows the ladder).
#[derive(Debug, Default)]
pub struct Prepared {
    pub by_resolution: Vec<Vec<Sample>>,
    pub skipped: Vec<Skip>,
}

fn quantize8(img: &GrayImage) -> GrayImage {
    img.map(|v| to_u8(v) as f64 / 255.0)
}

enum Outcome {
    Done(Vec<Sample>),
    Skipped(Skip),
}

fn prepare_record(r: &Record, mode: Mode, spec: &LadderSpec) -> CliResult<Outcome> {
    let skip = |reason: &str| {
        Ok(Outcome::Skipped(Skip {
            patient_id: r.patient_id.clone(),
            reason: reason.to_string(),
        }))
    };
    let image = read_gray(&r.cxr_path)?;
    let tb = read_gray(&r.tb_mask_path)?;
    let mut pair = SamplePair::new(image, tb, r.patient_id.clone())?;
    if mode != Mode::Original {
        let Some(lung_path) = &r.lung_mask_path else {
            return skip("no lung mask");
        };
        let lungs = read_mask(lung_path)?;
        if lungs.count_ones() == 0 {
            return skip("empty lung mask");
        }
        pair = crop_to_lungs(&pair, &lungs)?;
    }
    let ladder = build_ladder(&pair, spec)?;
    Ok(Outcome::Done(
        ladder
            .iter()
            .map(|p| Sample {
                id: r.patient_id.clone(),
                image: quantize8(p.image()),
                gt: binarize(p.tb_mask(), MASK_CUT),
            })
            .collect(),
    ))
}

/// Loads, crops and resamples `records` in parallel. Output order follows
/// `records`.
pub fn prepare(records: &[&Record], mode: Mode, resolutions: &[Resolution]) -> CliResult<Prepared> {
    let spec = LadderSpec::new(resolutions.to_vec(), mode)?;
    let outcomes = records
        .par_iter()
        .map(|r| prepare_record(r, mode, &spec))
        .collect::<CliResult<Vec<_>>>()?;
    let mut out = Prepared {
        by_resolution: vec![Vec::new(); resolutions.len()],
        skipped: Vec::new(),
    };
    for o in outcomes {
        match o {
            Outcome::Done(samples) => {
                for (slot, s) in out.by_resolution.iter_mut().zip(samples) {
                    slot.push(s);
                }
            }
            Outcome::Skipped(s) => out.skipped.push(s),
        }
    }
    Ok(out)
}

/// The manifest's own split, or a seeded one when it has none.
pub fn ensure_split(m: &Manifest, ratios: (f64, f64, f64), seed: u64) -> CliResult<Manifest> {
    if m.split.is_some() {
        Ok(m.clone())
    } else {
        Ok(patient_split(m, ratios, seed)?)
    }
}

pub fn records_in<'a>(m: &'a Manifest, parts: &[Split]) -> Vec<&'a Record> {
    m.records
        .iter()
        .filter(|r| {
            m.split_of(&r.patient_id)
                .is_some_and(|s| parts.contains(&s))
        })
        .collect()
}

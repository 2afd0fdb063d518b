//! Dataset catalog, patient-level splitting and cohort-level summaries.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::preprocess::lung_bbox;
use crate::raster::{resample_bicubic, BinaryMask, GrayImage};
use crate::rng::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
    Unknown,
}

impl Sex {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sex::M => "M",
            Sex::F => "F",
            Sex::Unknown => "",
        }
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::M),
            "f" | "female" => Ok(Sex::F),
            "" | "u" | "unknown" | "o" | "other" => Ok(Sex::Unknown),
            other => Err(format!("unrecognized sex {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unrecognized split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub patient_id: String,
    pub sex: Sex,
    pub age: Option<u32>,
    pub cxr_path: PathBuf,
    pub lung_mask_path: Option<PathBuf>,
    pub tb_mask_path: PathBuf,
    pub native_width: usize,
    pub native_height: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub records: Vec<Record>,
    pub seed: u64,
    pub split: Option<BTreeMap<String, Split>>,
}

impl Manifest {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.patient_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate patient_id {}",
                    r.patient_id
                )));
            }
        }
        Ok(Self {
            records,
            seed: 0,
            split: None,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_of(&self, patient_id: &str) -> Option<Split> {
        self.split.as_ref().and_then(|s| s.get(patient_id).copied())
    }

    /// Records assigned to `part`, in manifest order.
    pub fn partition(&self, part: Split) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| self.split_of(&r.patient_id) == Some(part))
            .collect()
    }

    pub fn split_sizes(&self) -> Option<(usize, usize, usize)> {
        self.split.as_ref()?;
        Some((
            self.partition(Split::Train).len(),
            self.partition(Split::Val).len(),
            self.partition(Split::Test).len(),
        ))
    }
}

const COLUMNS: [&str; 9] = [
    "patient_id",
    "sex",
    "age",
    "cxr_path",
    "lung_mask_path",
    "tb_mask_path",
    "width",
    "height",
    "split",
];

/// Reads a manifest CSV. Relative paths resolve against the manifest's
/// directory; missing `width`/`height` are read from the CXR header.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    if !path.is_file() {
        return Err(Error::data(path, "manifest file not found"));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = HashMap::new();
    for name in COLUMNS {
        match col(name) {
            Some(i) => {
                idx.insert(name, i);
            }
            None if matches!(name, "width" | "height" | "split" | "lung_mask_path") => {}
            None => {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("missing column {name}"),
                })
            }
        }
    }

    let mut records = Vec::new();
    let mut splits: Vec<Option<Split>> = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |name: &str| idx.get(name).and_then(|&i| row.get(i)).unwrap_or("");

        let patient_id = field("patient_id").to_string();
        if patient_id.is_empty() {
            return Err(fail("empty patient_id".into()));
        }
        if let Some(first) = seen.insert(patient_id.clone(), line) {
            return Err(fail(format!(
                "duplicate patient_id {patient_id} (first seen on line {first})"
            )));
        }
        let sex = field("sex").parse::<Sex>().map_err(fail)?;
        let age = match field("age") {
            "" => None,
            s => Some(
                s.parse::<u32>()
                    .map_err(|_| fail(format!("invalid age {s:?}")))?,
            ),
        };
        let resolve = |s: &str| -> Result<PathBuf> {
            let p = base.join(s);
            if p.is_file() {
                Ok(p)
            } else {
                Err(fail(format!(
                    "referenced file does not exist: {}",
                    p.display()
                )))
            }
        };
        let cxr_path = match field("cxr_path") {
            "" => return Err(fail("empty cxr_path".into())),
            s => resolve(s)?,
        };
        let tb_mask_path = match field("tb_mask_path") {
            "" => return Err(fail("empty tb_mask_path".into())),
            s => resolve(s)?,
        };
        let lung_mask_path = match field("lung_mask_path") {
            "" => None,
            s => Some(resolve(s)?),
        };
        let parse_dim = |name: &str| -> Result<Option<usize>> {
            match field(name) {
                "" => Ok(None),
                s => match s.parse::<usize>() {
                    Ok(v) if v > 0 => Ok(Some(v)),
                    _ => Err(fail(format!("invalid {name} {s:?}"))),
                },
            }
        };
        let (native_width, native_height) = match (parse_dim("width")?, parse_dim("height")?) {
            (Some(w), Some(h)) => (w, h),
            _ => io::image_dims(&cxr_path).map_err(|e| fail(e.to_string()))?,
        };
        let split = match field("split") {
            "" => None,
            s => Some(s.parse::<Split>().map_err(fail)?),
        };
        splits.push(split);
        records.push(Record {
            patient_id,
            sex,
            age,
            cxr_path,
            lung_mask_path,
            tb_mask_path,
            native_width,
            native_height,
        });
    }

    let assigned = splits.iter().filter(|s| s.is_some()).count();
    let split = if assigned == 0 {
        None
    } else if assigned == records.len() {
        Some(
            records
                .iter()
                .zip(&splits)
                .map(|(r, s)| (r.patient_id.clone(), s.expect("all assigned")))
                .collect(),
        )
    } else {
        let missing = records
            .iter()
            .zip(&splits)
            .find(|(_, s)| s.is_none())
            .map(|(r, _)| r);
        return Err(Error::data(
            path,
            format!(
                "split column is partially filled (first unassigned: {})",
                missing.map_or("?", |r| r.patient_id.as_str())
            ),
        ));
    };
    Ok(Manifest {
        records,
        seed: 0,
        split,
    })
}

/// Writes the manifest with paths made relative to `path`'s directory when
/// possible.
pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let rel = |p: &Path| -> String {
        p.strip_prefix(base)
            .map(|r| r.to_path_buf())
            .unwrap_or_else(|_| p.to_path_buf())
            .display()
            .to_string()
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COLUMNS)?;
    for r in &m.records {
        w.write_record([
            r.patient_id.clone(),
            r.sex.as_str().to_string(),
            r.age.map(|a| a.to_string()).unwrap_or_default(),
            rel(&r.cxr_path),
            r.lung_mask_path.as_deref().map(rel).unwrap_or_default(),
            rel(&r.tb_mask_path),
            r.native_width.to_string(),
            r.native_height.to_string(),
            m.split_of(&r.patient_id)
                .map(|s| s.to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Foreground wherever the pixel reaches `cut` (inclusive).
pub fn binarize(img: &GrayImage, cut: f64) -> BinaryMask {
    let bits = img.pixels().iter().map(|&v| v >= cut).collect();
    BinaryMask::new(img.width(), img.height(), bits).expect("dims taken from a valid image")
}

/// Partition sizes `round(r_train * n)`, `round(r_val * n)` and the remainder.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    if n < 3 {
        return Err(Error::invalid(format!(
            "cannot split {n} records into three partitions"
        )));
    }
    let train = (a * n as f64).round() as usize;
    let val = (b * n as f64).round() as usize;
    if train + val > n {
        return Err(Error::invalid(format!(
            "ratios {ratios:?} leave no room for a test partition of {n} records"
        )));
    }
    Ok((train, val, n - train - val))
}

/// Shuffles patient ids with [`SplitMix64`] (Fisher-Yates over manifest
/// order) and cuts the result into train/val/test.
pub fn patient_split(m: &Manifest, ratios: (f64, f64, f64), seed: u64) -> Result<Manifest> {
    let (n_train, n_val, _) = split_sizes(m.len(), ratios)?;
    let mut ids: Vec<&str> = m.records.iter().map(|r| r.patient_id.as_str()).collect();
    SplitMix64::new(seed).shuffle(&mut ids);
    let split = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let part = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id.to_string(), part)
        })
        .collect();
    Ok(Manifest {
        records: m.records.clone(),
        seed,
        split: Some(split),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Original,
    LungCropped,
}

impl Selection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Selection::Original => "original",
            Selection::LungCropped => "lung_cropped",
        }
    }
}

/// Means and sample standard deviations over a cohort. Undefined values
/// (fewer than two samples, empty sex group) are `NaN`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CohortStats {
    pub selection: Selection,
    pub n: usize,
    pub mean_width: f64,
    pub sd_width: f64,
    pub mean_height: f64,
    pub sd_height: f64,
    pub n_m: usize,
    pub n_f: usize,
    pub mean_age_m: f64,
    pub sd_age_m: f64,
    pub mean_age_f: f64,
    pub sd_age_f: f64,
    pub aspect_ratio: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Cohort statistics from explicit `(width, height)` dims and demographics.
pub fn stats_from_dims(
    selection: Selection,
    dims: &[(usize, usize)],
    demographics: &[(Sex, Option<u32>)],
) -> Result<CohortStats> {
    if dims.is_empty() {
        return Err(Error::Empty("cohort selection has no records".into()));
    }
    let widths: Vec<f64> = dims.iter().map(|d| d.0 as f64).collect();
    let heights: Vec<f64> = dims.iter().map(|d| d.1 as f64).collect();
    let ages = |sex: Sex| -> Vec<f64> {
        demographics
            .iter()
            .filter(|(s, _)| *s == sex)
            .filter_map(|(_, a)| a.map(f64::from))
            .collect()
    };
    let (mean_width, sd_width) = mean_sd(&widths);
    let (mean_height, sd_height) = mean_sd(&heights);
    let (mean_age_m, sd_age_m) = mean_sd(&ages(Sex::M));
    let (mean_age_f, sd_age_f) = mean_sd(&ages(Sex::F));
    Ok(CohortStats {
        selection,
        n: dims.len(),
        mean_width,
        sd_width,
        mean_height,
        sd_height,
        n_m: demographics.iter().filter(|d| d.0 == Sex::M).count(),
        n_f: demographics.iter().filter(|d| d.0 == Sex::F).count(),
        mean_age_m,
        sd_age_m,
        mean_age_f,
        sd_age_f,
        aspect_ratio: mean_width / mean_height,
    })
}

/// Statistics over the native images or over their lung bounding boxes.
/// The lung-cropped selection reads every lung mask from disk.
pub fn cohort_stats(m: &Manifest, which: Selection) -> Result<CohortStats> {
    let mut dims = Vec::with_capacity(m.len());
    for r in &m.records {
        match which {
            Selection::Original => dims.push((r.native_width, r.native_height)),
            Selection::LungCropped => {
                let path = r.lung_mask_path.as_ref().ok_or_else(|| {
                    Error::invalid(format!("record {} has no lung mask", r.patient_id))
                })?;
                let bbox = lung_bbox(&io::read_mask(path)?)
                    .map_err(|e| Error::data(path, e.to_string()))?;
                dims.push((bbox.w, bbox.h));
            }
        }
    }
    let demo: Vec<_> = m.records.iter().map(|r| (r.sex, r.age)).collect();
    stats_from_dims(which, &dims, &demo)
}

/// Counts behind the sex and age-distribution charts: `(category, bin, count)`.
/// Age bins are decades, e.g. `30-39`; missing ages land in `unknown`.
pub fn demographics(m: &Manifest) -> Vec<(String, String, usize)> {
    let mut sex: BTreeMap<String, usize> = BTreeMap::new();
    let mut age: BTreeMap<(u32, String), usize> = BTreeMap::new();
    for r in &m.records {
        let s = match r.sex {
            Sex::Unknown => "unknown".to_string(),
            other => other.as_str().to_string(),
        };
        *sex.entry(s).or_default() += 1;
        let key = match r.age {
            Some(a) => {
                let lo = a / 10 * 10;
                (lo, format!("{}-{}", lo, lo + 9))
            }
            None => (u32::MAX, "unknown".to_string()),
        };
        *age.entry(key).or_default() += 1;
    }
    sex.into_iter()
        .map(|(k, v)| ("sex".to_string(), k, v))
        .chain(age.into_iter().map(|((_, k), v)| ("age".to_string(), k, v)))
        .collect()
}

/// Averaged-mask heatmap: every mask is bicubic-resampled to `side`x`side`,
/// averaged pixelwise in list order, then min-max normalized. A constant
/// field normalizes to all zeros.
pub fn cohort_heatmap(masks: &[BinaryMask], side: usize) -> Result<GrayImage> {
    cohort_heatmap_iter(masks.iter().map(Ok), side)
}

/// [`cohort_heatmap`] over a stream, so masks can be loaded one at a time.
pub fn cohort_heatmap_iter<M: Borrow<BinaryMask>>(
    masks: impl IntoIterator<Item = Result<M>>,
    side: usize,
) -> Result<GrayImage> {
    let mut sum = vec![0.0; side * side];
    let mut n = 0usize;
    for mask in masks {
        let resized = resample_bicubic(&mask?.borrow().to_image(), side, side)?;
        for (s, v) in sum.iter_mut().zip(resized.pixels()) {
            *s += v;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("heatmap needs at least one mask".into()));
    }
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n as f64).collect();
    let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels = if hi > lo {
        mean.iter()
            .map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; side * side]
    };
    GrayImage::new(side, side, pixels)
}

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use super::threshold::{threshold_search, ThresholdGrid, ThresholdResult};
use super::tta::{
    canonical_transforms, predict_checked, tta_aggregate, tta_transforms, TtaMethod, TtaPrediction,
};
use super::Predictor;
use crate::error::{Error, Result};
use crate::raster::{apply_transform, ensure_same_dims, BinaryMask, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MethodScore {
    pub method: TtaMethod,
    pub threshold: f64,
    pub iou: f64,
}

/// Best method for one snapshot plus the scores of every method tried.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TtaSelection {
    pub method: TtaMethod,
    pub threshold: f64,
    pub iou: f64,
    pub scores: Vec<MethodScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub id: String,
    /// Where predictions come from (a directory, or a synthetic seed label).
    pub source: String,
    pub selection: Option<TtaSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotSet {
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let snapshots: Vec<Snapshot> = entries
            .into_iter()
            .map(|(id, source)| Snapshot {
                id,
                source,
                selection: None,
            })
            .collect();
        if snapshots.is_empty() {
            return Err(Error::Empty("snapshot set".into()));
        }
        let mut seen = HashSet::new();
        for s in &snapshots {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate snapshot id {:?}", s.id)));
            }
        }
        Ok(Self { snapshots })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.snapshots.iter().position(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.snapshots.iter().map(|s| s.id.as_str()).collect()
    }
}

/// TTA-aggregated maps for a batch of images, one per image.
pub fn tta_maps(
    p: &dyn Predictor,
    imgs: &[GrayImage],
    method: TtaMethod,
) -> Result<Vec<GrayImage>> {
    imgs.par_iter()
        .map(|img| super::tta::tta_predict(p, img, method))
        .collect()
}

/// Predicts all canonical copies of every image once, then aggregates each
/// method's subset in canonical order. The result per method is bit-exact
/// with `tta_predict`.
fn maps_for_methods(
    p: &dyn Predictor,
    imgs: &[GrayImage],
    methods: &[TtaMethod],
) -> Result<Vec<Vec<GrayImage>>> {
    let canon = canonical_transforms();
    let per_image: Vec<Vec<GrayImage>> = imgs
        .par_iter()
        .map(|img| {
            let preds: Vec<TtaPrediction> = canon
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let (copy, validity) = apply_transform(img, t)?;
                    let map = predict_checked(p, &copy).map_err(|e| Error::Predictor {
                        copy: i,
                        source: Box::new(e),
                    })?;
                    Ok(TtaPrediction {
                        transform: *t,
                        map,
                        validity,
                    })
                })
                .collect::<Result<_>>()?;
            methods
                .iter()
                .map(|&m| {
                    let wanted = tta_transforms(m);
                    let subset: Vec<TtaPrediction> = preds
                        .iter()
                        .filter(|e| wanted.contains(&e.transform))
                        .cloned()
                        .collect();
                    tta_aggregate(&subset)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    // Transpose to method-major.
    Ok((0..methods.len())
        .map(|k| per_image.iter().map(|maps| maps[k].clone()).collect())
        .collect())
}

/// Scores every method on validation data and records the best per snapshot.
/// Ties go to the lowest method index, then the lowest threshold.
pub fn select_tta(
    set: &SnapshotSet,
    predictors: &[&dyn Predictor],
    val_imgs: &[GrayImage],
    val_gts: &[BinaryMask],
    methods: &[TtaMethod],
    grid: &ThresholdGrid,
) -> Result<SnapshotSet> {
    if predictors.len() != set.len() {
        return Err(Error::invalid(format!(
            "{} predictors for {} snapshots",
            predictors.len(),
            set.len()
        )));
    }
    if val_imgs.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    if val_imgs.len() != val_gts.len() {
        return Err(Error::invalid(
            "validation images and masks differ in count",
        ));
    }
    if methods.is_empty() {
        return Err(Error::Empty("TTA method list".into()));
    }
    for (img, gt) in val_imgs.iter().zip(val_gts) {
        ensure_same_dims(img.dims(), gt.dims())?;
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let mut out = set.clone();
    for (snap, p) in out.snapshots.iter_mut().zip(predictors) {
        let maps = maps_for_methods(*p, val_imgs, &methods)?;
        let mut scores = Vec::with_capacity(methods.len());
        let mut best: Option<MethodScore> = None;
        for (&m, maps) in methods.iter().zip(&maps) {
            let r = threshold_search(maps, val_gts, grid)?;
            let s = MethodScore {
                method: m,
                threshold: r.threshold,
                iou: r.iou,
            };
            if best.is_none_or(|b| s.iou > b.iou) {
                best = Some(s);
            }
            scores.push(s);
        }
        let best = best.expect("methods nonempty");
        snap.selection = Some(TtaSelection {
            method: best.method,
            threshold: best.threshold,
            iou: best.iou,
            scores,
        });
    }
    Ok(out)
}

/// Indices ordered by descending IoU; equal values keep index order and NaN
/// sorts last.
pub fn rank_by_iou(ious: &[f64]) -> Vec<usize> {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut idx: Vec<usize> = (0..ious.len()).collect();
    idx.sort_by(|&a, &b| key(ious[b]).total_cmp(&key(ious[a])));
    idx
}

/// Snapshot indices ranked by their selected validation IoU.
pub fn rank_snapshots(set: &SnapshotSet) -> Result<Vec<usize>> {
    let ious =
        set.snapshots
            .iter()
            .map(|s| {
                s.selection.as_ref().map(|sel| sel.iou).ok_or_else(|| {
                    Error::invalid(format!("snapshot {} has no TTA selection", s.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
    Ok(rank_by_iou(&ious))
}

/// Per-image unweighted mean over the chosen snapshots.
pub fn average_maps(
    maps_by_snapshot: &[Vec<GrayImage>],
    members: &[usize],
) -> Result<Vec<GrayImage>> {
    let first = *members
        .first()
        .ok_or_else(|| Error::Empty("ensemble members".into()))?;
    let n_images = maps_by_snapshot
        .get(first)
        .ok_or_else(|| Error::invalid(format!("snapshot index {first} out of range")))?
        .len();
    for &s in members {
        let maps = maps_by_snapshot
            .get(s)
            .ok_or_else(|| Error::invalid(format!("snapshot index {s} out of range")))?;
        if maps.len() != n_images {
            return Err(Error::invalid("snapshots cover different image counts"));
        }
    }
    (0..n_images)
        .map(|i| {
            let reference = &maps_by_snapshot[first][i];
            let (w, h) = reference.dims();
            let mut acc = vec![0.0; w * h];
            for (k, &s) in members.iter().enumerate() {
                let m = &maps_by_snapshot[s][i];
                ensure_same_dims(reference.dims(), m.dims())?;
                for (a, &v) in acc.iter_mut().zip(m.pixels()) {
                    *a += (v - *a) / (k + 1) as f64;
                }
            }
            GrayImage::new(w, h, acc)
        })
        .collect()
}

/// Averages the top `k` ranked snapshots and re-optimizes the threshold on
/// the averaged validation maps.
pub fn average_topk(
    maps_by_snapshot: &[Vec<GrayImage>],
    ranking: &[usize],
    k: usize,
    grid: &ThresholdGrid,
    val_gts: &[BinaryMask],
) -> Result<(Vec<GrayImage>, ThresholdResult)> {
    if k == 0 || k > ranking.len() || k > maps_by_snapshot.len() {
        return Err(Error::invalid(format!(
            "k={k} outside 1..={}",
            ranking.len().min(maps_by_snapshot.len())
        )));
    }
    let maps = average_maps(maps_by_snapshot, &ranking[..k])?;
    let t = threshold_search(&maps, val_gts, grid)?;
    Ok((maps, t))
}

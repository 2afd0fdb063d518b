//! Per-snapshot predictors for one resolution.

use std::path::{Path, PathBuf};

use maskpipe::optimize::{
    canonical_transforms, synthetic_predictor, MapLookupPredictor, Predictor,
};
use maskpipe::preprocess::Resolution;
use maskpipe::rng::mix64;
use serde::Deserialize;

use crate::config::{PredictorKind, RunConfig};
use crate::data::Sample;
use crate::error::{CliError, CliResult};

pub const BASELINE_ID: &str = "baseline";

pub struct NamedPredictor {
    pub id: String,
    pub source: String,
    pub predictor: Box<dyn Predictor>,
}

/// The baseline model plus the harvested snapshots, in snapshot order.
pub struct PredictorSet {
    pub baseline: NamedPredictor,
    pub snapshots: Vec<NamedPredictor>,
}

#[derive(Deserialize)]
struct SidecarRow {
    snapshot_id: String,
    dir: PathBuf,
}

/// Reads the `snapshot_id,dir` sidecar; relative dirs resolve against it.
pub fn read_sidecar(path: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for row in rdr.deserialize::<SidecarRow>() {
        let row = row.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        rows.push((row.snapshot_id, base.join(row.dir)));
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no snapshots listed",
            path.display()
        )));
    }
    Ok(rows)
}

/// Snapshot ids the config will produce, without building predictors.
pub fn snapshot_ids(cfg: &RunConfig) -> CliResult<Vec<String>> {
    match cfg.predictor {
        PredictorKind::Synthetic => Ok((1..=cfg.synthetic_snapshots)
            .map(|i| format!("S{i}"))
            .collect()),
        PredictorKind::Files => {
            let rows = read_sidecar(cfg.snapshots.as_deref().expect("validated"))?;
            let ids: Vec<String> = rows
                .into_iter()
                .map(|r| r.0)
                .filter(|id| id != BASELINE_ID)
                .collect();
            Ok(ids)
        }
    }
}

/// Builds predictors that can answer for every sample in `samples` (and
/// their TTA copies) at resolution `res`.
pub fn build(cfg: &RunConfig, res: Resolution, samples: &[&Sample]) -> CliResult<PredictorSet> {
    match cfg.predictor {
        PredictorKind::Synthetic => {
            let fixtures: Vec<_> = samples
                .iter()
                .map(|s| (s.image.clone(), s.gt.clone()))
                .collect();
            let base = synthetic_predictor(
                cfg.seed,
                cfg.synthetic_fidelity,
                &fixtures,
                cfg.synthetic_blur,
            )?;
            let named = |id: String, k: u64| {
                let seed = mix64(cfg.seed ^ mix64(k));
                NamedPredictor {
                    source: format!("synthetic(seed={seed},fidelity={})", cfg.synthetic_fidelity),
                    id,
                    predictor: Box::new(base.reseeded(seed)),
                }
            };
            Ok(PredictorSet {
                baseline: named(BASELINE_ID.to_string(), 0),
                snapshots: (1..=cfg.synthetic_snapshots)
                    .map(|i| named(format!("S{i}"), i as u64))
                    .collect(),
            })
        }
        PredictorKind::Files => {
            let rows = read_sidecar(cfg.snapshots.as_deref().expect("validated"))?;
            let transforms = canonical_transforms();
            let mut built = Vec::new();
            for (id, dir) in rows {
                // Multi-resolution runs keep one subdirectory per resolution.
                let nested = dir.join(res.to_string());
                let dir = if nested.is_dir() { nested } else { dir };
                let mut p = MapLookupPredictor::new();
                for s in samples {
                    p.register(&dir, &s.id, &s.image, &transforms)?;
                }
                built.push(NamedPredictor {
                    source: dir.display().to_string(),
                    id,
                    predictor: Box::new(p),
                });
            }
            let at = built.iter().position(|p| p.id == BASELINE_ID);
            let baseline = match at {
                Some(i) => built.remove(i),
                None => {
                    let first = &built[0];
                    let mut p = MapLookupPredictor::new();
                    let dir = PathBuf::from(&first.source);
                    for s in samples {
                        p.register(&dir, &s.id, &s.image, &transforms)?;
                    }
                    NamedPredictor {
                        id: BASELINE_ID.to_string(),
                        source: first.source.clone(),
                        predictor: Box::new(p),
                    }
                }
            };
            if built.is_empty() {
                return Err(CliError::Data(
                    "sidecar lists only a baseline; snapshots are needed".into(),
                ));
            }
            Ok(PredictorSet {
                baseline,
                snapshots: built,
            })
        }
    }
}

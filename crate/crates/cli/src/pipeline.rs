//! The evaluation studies behind each report table.

use maskpipe::cohort::{binarize, Manifest, Split};
use maskpipe::metrics::{evaluate_set, SetMetrics, SsimParams, DEFAULT_CI_LEVEL};
use maskpipe::optimize::{
    average_maps, average_topk, rank_snapshots, select_tta, threshold_search, tta_maps, Predictor,
    SnapshotSet, ThresholdGrid, ThresholdResult, TtaMethod,
};
use maskpipe::preprocess::Resolution;
use maskpipe::{BinaryMask, GrayImage};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Sample;
use crate::error::{CliError, CliResult};
use crate::predictors::PredictorSet;

/// One table row: test-set metrics at a validation-tuned threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub label: String,
    pub n: usize,
    pub iou: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub dice: f64,
    pub ssim: f64,
    pub sre: f64,
    pub opt_t: f64,
    pub macro_iou: f64,
    pub macro_dice: f64,
    pub sre_pos_inf: usize,
    pub sre_neg_inf: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageRow {
    pub label: String,
    pub patient_id: String,
    pub iou: f64,
    pub dice: f64,
    pub ssim: f64,
    pub sre: f64,
}

/// Validation and test samples at one resolution.
pub struct Partitioned {
    pub res: Resolution,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Partitioned {
    pub fn new(m: &Manifest, res: Resolution, samples: Vec<Sample>) -> CliResult<Self> {
        let (mut val, mut test) = (Vec::new(), Vec::new());
        for s in samples {
            match m.split_of(&s.id) {
                Some(Split::Val) => val.push(s),
                Some(Split::Test) => test.push(s),
                _ => {}
            }
        }
        if val.is_empty() {
            return Err(CliError::Data(format!("no validation samples at {res}")));
        }
        if test.is_empty() {
            return Err(CliError::Data(format!("no test samples at {res}")));
        }
        Ok(Self { res, val, test })
    }

    pub fn all(&self) -> Vec<&Sample> {
        self.val.iter().chain(&self.test).collect()
    }

    pub fn val_images(&self) -> Vec<GrayImage> {
        self.val.iter().map(|s| s.image.clone()).collect()
    }

    pub fn val_gts(&self) -> Vec<BinaryMask> {
        self.val.iter().map(|s| s.gt.clone()).collect()
    }

    pub fn test_images(&self) -> Vec<GrayImage> {
        self.test.iter().map(|s| s.image.clone()).collect()
    }
}

pub fn predict_all(p: &dyn Predictor, imgs: &[GrayImage]) -> CliResult<Vec<GrayImage>> {
    Ok(imgs
        .par_iter()
        .map(|i| {
            let out = p.predict(i)?;
            if out.dims() != i.dims() {
                return Err(maskpipe::Error::DimensionMismatch {
                    expected: i.dims(),
                    actual: out.dims(),
                });
            }
            Ok(out)
        })
        .collect::<maskpipe::Result<Vec<_>>>()?)
}

/// Binarizes `maps` at `t` and scores them against the test masks.
pub fn evaluate(
    label: &str,
    maps: &[GrayImage],
    test: &[Sample],
    t: f64,
) -> CliResult<(MetricRow, Vec<ImageRow>)> {
    let (row, images, _) = evaluate_full(label, maps, test, t)?;
    Ok((row, images))
}

pub fn evaluate_full(
    label: &str,
    maps: &[GrayImage],
    test: &[Sample],
    t: f64,
) -> CliResult<(MetricRow, Vec<ImageRow>, SetMetrics)> {
    let preds: Vec<BinaryMask> = maps.iter().map(|m| binarize(m, t)).collect();
    let gts: Vec<BinaryMask> = test.iter().map(|s| s.gt.clone()).collect();
    let pairs: Vec<(GrayImage, GrayImage)> = gts
        .iter()
        .zip(&preds)
        .map(|(g, p)| (g.to_image(), p.to_image()))
        .collect();
    let m = evaluate_set(
        &preds,
        &gts,
        &pairs,
        &SsimParams::default(),
        DEFAULT_CI_LEVEL,
    )?;
    let row = MetricRow {
        label: label.to_string(),
        n: m.n,
        iou: m.iou,
        ci_lower: m.ci.lower,
        ci_upper: m.ci.upper,
        dice: m.dice,
        ssim: m.ssim,
        sre: m.sre,
        opt_t: t,
        macro_iou: m.macro_iou,
        macro_dice: m.macro_dice,
        sre_pos_inf: m.sre_pos_inf,
        sre_neg_inf: m.sre_neg_inf,
    };
    let images = test
        .iter()
        .zip(&m.per_image)
        .map(|(s, im)| ImageRow {
            label: label.to_string(),
            patient_id: s.id.clone(),
            iou: im.iou,
            dice: im.dice,
            ssim: im.ssim,
            sre: im.sre,
        })
        .collect();
    Ok((row, images, m))
}

/// Tuned threshold plus test results for the baseline at one resolution.
pub struct ResolutionResult {
    pub res: Resolution,
    pub tuned: ThresholdResult,
    pub row: MetricRow,
    pub per_image: Vec<ImageRow>,
    pub test_maps: Vec<GrayImage>,
}

pub fn tune(
    p: &dyn Predictor,
    data: &Partitioned,
    grid: &ThresholdGrid,
) -> CliResult<ThresholdResult> {
    let maps = predict_all(p, &data.val_images())?;
    Ok(threshold_search(&maps, &data.val_gts(), grid)?)
}

pub fn resolution_study(
    label: &str,
    preds: &PredictorSet,
    data: &Partitioned,
    grid: &ThresholdGrid,
) -> CliResult<ResolutionResult> {
    let p = preds.baseline.predictor.as_ref();
    let tuned = tune(p, data, grid)?;
    let test_maps = predict_all(p, &data.test_images())?;
    let (row, per_image) = evaluate(label, &test_maps, &data.test, tuned.threshold)?;
    Ok(ResolutionResult {
        res: data.res,
        tuned,
        row,
        per_image,
        test_maps,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionRow {
    pub snapshot: String,
    pub method: TtaMethod,
    pub combination: String,
    pub threshold: f64,
    pub val_iou: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodRow {
    pub snapshot: String,
    pub method: TtaMethod,
    pub threshold: f64,
    pub val_iou: f64,
}

pub struct TtaStudy {
    pub set: SnapshotSet,
    pub selection: Vec<SelectionRow>,
    pub methods: Vec<MethodRow>,
}

pub fn tta_study(
    preds: &PredictorSet,
    data: &Partitioned,
    methods: &[TtaMethod],
    grid: &ThresholdGrid,
) -> CliResult<TtaStudy> {
    let set = SnapshotSet::new(
        preds
            .snapshots
            .iter()
            .map(|p| (p.id.clone(), p.source.clone())),
    )?;
    let ps: Vec<&dyn Predictor> = preds
        .snapshots
        .iter()
        .map(|p| p.predictor.as_ref())
        .collect();
    let set = select_tta(
        &set,
        &ps,
        &data.val_images(),
        &data.val_gts(),
        methods,
        grid,
    )?;
    let mut selection = Vec::new();
    let mut all = Vec::new();
    for s in &set.snapshots {
        let sel = s
            .selection
            .as_ref()
            .expect("select_tta fills every snapshot");
        selection.push(SelectionRow {
            snapshot: s.id.clone(),
            method: sel.method,
            combination: sel.method.description(),
            threshold: sel.threshold,
            val_iou: sel.iou,
        });
        all.extend(sel.scores.iter().map(|m| MethodRow {
            snapshot: s.id.clone(),
            method: m.method,
            threshold: m.threshold,
            val_iou: m.iou,
        }));
    }
    Ok(TtaStudy {
        set,
        selection,
        methods: all,
    })
}

pub struct EnsembleStudy {
    pub rows: Vec<MetricRow>,
    pub ranking: Vec<String>,
}

/// Baseline, each snapshot without and with its selected TTA, then the
/// top-k snapshot averages.
pub fn ensemble_study(
    baseline_label: &str,
    preds: &PredictorSet,
    data: &Partitioned,
    tta: &TtaStudy,
    top_k: &[usize],
    grid: &ThresholdGrid,
) -> CliResult<EnsembleStudy> {
    let m = preds.snapshots.len();
    if let Some(k) = top_k.iter().find(|&&k| k > m) {
        return Err(CliError::Config(format!(
            "top_k entry {k} exceeds the {m} available snapshots"
        )));
    }
    let val_imgs = data.val_images();
    let val_gts = data.val_gts();
    let test_imgs = data.test_images();

    let mut rows = Vec::new();
    let base = resolution_study(baseline_label, preds, data, grid)?;
    rows.push(base.row);

    for p in &preds.snapshots {
        let t = tune(p.predictor.as_ref(), data, grid)?;
        let maps = predict_all(p.predictor.as_ref(), &test_imgs)?;
        rows.push(evaluate(&p.id, &maps, &data.test, t.threshold)?.0);
    }

    let mut val_maps = Vec::with_capacity(m);
    let mut test_maps = Vec::with_capacity(m);
    for (p, s) in preds.snapshots.iter().zip(&tta.set.snapshots) {
        let sel = s.selection.as_ref().expect("selected");
        let pr = p.predictor.as_ref();
        val_maps.push(tta_maps(pr, &val_imgs, sel.method)?);
        let maps = tta_maps(pr, &test_imgs, sel.method)?;
        rows.push(evaluate(&format!("{}-TTA", p.id), &maps, &data.test, sel.threshold)?.0);
        test_maps.push(maps);
    }

    let ranking = rank_snapshots(&tta.set)?;
    for &k in top_k {
        let (_, t) = average_topk(&val_maps, &ranking, k, grid, &val_gts)?;
        let maps = average_maps(&test_maps, &ranking[..k])?;
        let ids: Vec<&str> = ranking[..k]
            .iter()
            .map(|&i| preds.snapshots[i].id.as_str())
            .collect();
        rows.push(
            evaluate(
                &format!("{}-TTA", ids.join(",")),
                &maps,
                &data.test,
                t.threshold,
            )?
            .0,
        );
    }
    Ok(EnsembleStudy {
        rows,
        ranking: ranking
            .iter()
            .map(|&i| preds.snapshots[i].id.clone())
            .collect(),
    })
}

//! Command implementations. Each writes into a staging directory that is
//! renamed into place only when the command succeeds.

use std::fs;
use std::path::{Path, PathBuf};

use maskpipe::cohort::binarize;
use maskpipe::cohort::{
    cohort_heatmap_iter, cohort_stats, demographics, load_manifest, patient_split, Manifest,
    Selection, Split,
};
use maskpipe::io::{read_mask, write_gray8, write_mask8, write_rgb8};
use maskpipe::optimize::{cyclic_lr, LrSchedule};
use maskpipe::preprocess::{LadderSpec, Mode, Resolution, AR_HEIGHTS, DEFAULT_SIDES};
use maskpipe::raster::jet_colormap;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::data::{ensure_split, prepare, records_in, Prepared};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    ensemble_study, resolution_study, tta_study, MetricRow, Partitioned, ResolutionResult,
};
use crate::predictors;
use crate::render::{contour_overlay, quality_map};
use crate::report::{self, fmt4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Prep,
    Split,
    Stats,
    Heatmap,
    Eval,
    Tune,
    Tta,
    Ensemble,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prep => "prep",
            Command::Split => "split",
            Command::Stats => "stats",
            Command::Heatmap => "heatmap",
            Command::Eval => "eval",
            Command::Tune => "tune",
            Command::Tta => "tta",
            Command::Ensemble => "ensemble",
            Command::Report => "report",
        }
    }
}

#[derive(Serialize)]
struct ProvenanceDoc<'a> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a RunConfig,
}

/// Fills in everything the run derives (absolute paths, the ladder, the
/// aspect ratio) so the provenance file replays the run exactly.
pub fn resolve(mut cfg: RunConfig, manifest: &Manifest) -> CliResult<RunConfig> {
    cfg.validate()?;
    cfg.manifest = absolute(&cfg.manifest)?;
    cfg.out = absolute(&cfg.out)?;
    if let Some(s) = cfg.snapshots.take() {
        cfg.snapshots = Some(absolute(&s)?);
    }
    if cfg.mode == Mode::ArCorrected && cfg.aspect_ratio.is_none() && cfg.resolutions.is_empty() {
        let with_lungs: Vec<_> = manifest
            .records
            .iter()
            .filter(|r| r.lung_mask_path.is_some())
            .cloned()
            .collect();
        let sub = Manifest::new(with_lungs)?;
        let ar = cohort_stats(&sub, Selection::LungCropped)?.aspect_ratio;
        if !(ar > 0.0 && ar <= 1.0) {
            return Err(CliError::Data(format!(
                "measured aspect ratio {ar:.4} is outside (0, 1]; set aspect_ratio explicitly"
            )));
        }
        cfg.aspect_ratio = Some(ar);
    }
    if cfg.resolutions.is_empty() {
        let ladder = match cfg.mode {
            Mode::ArCorrected => {
                LadderSpec::aspect_corrected(&AR_HEIGHTS, cfg.aspect_ratio.expect("set above"))?
            }
            m => LadderSpec::new(
                DEFAULT_SIDES
                    .iter()
                    .map(|&s| Resolution::square(s))
                    .collect(),
                m,
            )?,
        };
        cfg.resolutions = ladder.resolutions().iter().map(|r| r.to_string()).collect();
    }
    LadderSpec::new(cfg.parsed_resolutions()?, cfg.mode)?;
    Ok(cfg)
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    if p.is_absolute() {
        Ok(p.to_path_buf())
    } else {
        Ok(std::env::current_dir()?.join(p))
    }
}

/// Output directory name for a command.
pub fn target_name(cmd: Command, cfg: &RunConfig) -> String {
    match cmd {
        Command::Prep => cfg.mode.as_str().to_string(),
        c => c.name().to_string(),
    }
}

pub fn run(cmd: Command, cfg: RunConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest)?;
    let cfg = resolve(cfg, &manifest)?;
    let name = target_name(cmd, &cfg);
    fs::create_dir_all(&cfg.out)?;
    let stage = cfg.out.join(format!(".{name}.tmp"));
    if stage.exists() {
        fs::remove_dir_all(&stage)?;
    }
    fs::create_dir_all(&stage)?;
    let result = execute(cmd, &cfg, &manifest, &stage);
    if let Err(e) = result {
        let _ = fs::remove_dir_all(&stage);
        return Err(e);
    }
    let doc = ProvenanceDoc {
        command: cmd.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
    };
    fs::write(
        stage.join("provenance.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    let target = cfg.out.join(&name);
    if target.exists() {
        fs::remove_dir_all(&target)?;
    }
    fs::rename(&stage, &target)?;
    Ok(target)
}

fn execute(cmd: Command, cfg: &RunConfig, manifest: &Manifest, dir: &Path) -> CliResult<()> {
    match cmd {
        Command::Prep => prep(cfg, manifest, dir),
        Command::Split => split(cfg, manifest, dir),
        Command::Stats => stats(manifest, dir, cfg),
        Command::Heatmap => heatmap(manifest, dir, cfg),
        Command::Tune => tune(cfg, manifest, dir),
        Command::Eval => {
            eval(cfg, manifest, dir, false)?;
            Ok(())
        }
        Command::Tta => {
            let (data, preds) = snapshot_inputs(cfg, manifest, None)?;
            write_tta(
                cfg,
                &tta_study(&preds, &data, &cfg.methods()?, &cfg.grid()?)?,
                dir,
            )
        }
        Command::Ensemble => {
            ensemble(cfg, manifest, dir, None)?;
            Ok(())
        }
        Command::Report => report(cfg, manifest, dir),
    }
}

fn prep(cfg: &RunConfig, manifest: &Manifest, dir: &Path) -> CliResult<()> {
    let resolutions = cfg.parsed_resolutions()?;
    let records: Vec<_> = manifest.records.iter().collect();
    let prepared = prepare(&records, cfg.mode, &resolutions)?;
    for (res, samples) in resolutions.iter().zip(&prepared.by_resolution) {
        let sub = dir.join(res.to_string());
        fs::create_dir_all(&sub)?;
        samples
            .par_iter()
            .map(|s| {
                write_gray8(&sub.join(format!("{}_img.png", s.id)), &s.image)?;
                write_mask8(&sub.join(format!("{}_msk.png", s.id)), &s.gt)
            })
            .collect::<maskpipe::Result<Vec<_>>>()?;
    }
    write_skips(&dir.join("skipped.csv"), &prepared)
}

fn write_skips(path: &Path, p: &Prepared) -> CliResult<()> {
    let rows: Vec<[String; 2]> = p
        .skipped
        .iter()
        .map(|s| [s.patient_id.clone(), s.reason.clone()])
        .collect();
    report::write_rows(path, ["patient_id", "reason"], &rows)
}

fn split(cfg: &RunConfig, manifest: &Manifest, dir: &Path) -> CliResult<()> {
    let m = patient_split(manifest, cfg.ratios(), cfg.seed)?;
    maskpipe::cohort::write_manifest(&dir.join("manifest.csv"), &m)?;
    let (a, b, c) = m.split_sizes().expect("split assigned");
    report::write_rows(
        &dir.join("split_sizes.csv"),
        ["split", "count"],
        &[
            ["train".to_string(), a.to_string()],
            ["val".to_string(), b.to_string()],
            ["test".to_string(), c.to_string()],
        ],
    )
}

fn stats(manifest: &Manifest, dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    let mut rows = vec![cohort_stats(manifest, Selection::Original)?];
    let with_lungs: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| r.lung_mask_path.is_some())
        .cloned()
        .collect();
    if !with_lungs.is_empty() {
        rows.push(cohort_stats(
            &Manifest::new(with_lungs)?,
            Selection::LungCropped,
        )?);
    }
    let body: Vec<[String; 13]> = rows
        .iter()
        .map(|s| {
            [
                s.selection.as_str().to_string(),
                s.n.to_string(),
                fmt4(s.mean_width),
                fmt4(s.sd_width),
                fmt4(s.mean_height),
                fmt4(s.sd_height),
                s.n_m.to_string(),
                s.n_f.to_string(),
                fmt4(s.mean_age_m),
                fmt4(s.sd_age_m),
                fmt4(s.mean_age_f),
                fmt4(s.sd_age_f),
                fmt4(s.aspect_ratio),
            ]
        })
        .collect();
    report::write_rows(
        &dir.join("stats.csv"),
        [
            "selection",
            "n",
            "mean_width",
            "sd_width",
            "mean_height",
            "sd_height",
            "n_male",
            "n_female",
            "mean_age_male",
            "sd_age_male",
            "mean_age_female",
            "sd_age_female",
            "aspect_ratio",
        ],
        &body,
    )?;
    let demo: Vec<[String; 3]> = demographics(manifest)
        .into_iter()
        .map(|(c, b, n)| [c, b, n.to_string()])
        .collect();
    report::write_rows(
        &dir.join("demographics.csv"),
        ["category", "bin", "count"],
        &demo,
    )?;
    if cfg.wants(Format::Markdown) {
        let mut md = String::from("### Cohort statistics\n\n| Selection | n | Width | Height | Male age | Female age | AR |\n|---|---|---|---|---|---|---|\n");
        for s in &rows {
            md.push_str(&format!(
                "| {} | {} | {} ± {} | {} ± {} | {} ± {} (n={}) | {} ± {} (n={}) | {} |\n",
                s.selection.as_str(),
                s.n,
                fmt4(s.mean_width),
                fmt4(s.sd_width),
                fmt4(s.mean_height),
                fmt4(s.sd_height),
                fmt4(s.mean_age_m),
                fmt4(s.sd_age_m),
                s.n_m,
                fmt4(s.mean_age_f),
                fmt4(s.sd_age_f),
                s.n_f,
                fmt4(s.aspect_ratio)
            ));
        }
        report::write_text(&dir.join("stats.md"), &md)?;
    }
    Ok(())
}

fn heatmap(manifest: &Manifest, dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    let masks = manifest.records.iter().map(|r| read_mask(&r.tb_mask_path));
    let heat = cohort_heatmap_iter(masks, cfg.heatmap_side)?;
    write_gray8(&dir.join("heatmap_gray.png"), &heat)?;
    write_rgb8(&dir.join("heatmap_jet.png"), &jet_colormap(&heat))?;
    Ok(())
}

/// Val and test samples for every resolution in the ladder.
fn eval_inputs(
    cfg: &RunConfig,
    manifest: &Manifest,
) -> CliResult<(Manifest, Vec<Partitioned>, Prepared)> {
    let m = ensure_split(manifest, cfg.ratios(), cfg.seed)?;
    let resolutions = cfg.parsed_resolutions()?;
    let records = records_in(&m, &[Split::Val, Split::Test]);
    let mut prepared = prepare(&records, cfg.mode, &resolutions)?;
    let by_res = std::mem::take(&mut prepared.by_resolution);
    let parts = resolutions
        .iter()
        .zip(by_res)
        .map(|(&res, samples)| Partitioned::new(&m, res, samples))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((m, parts, prepared))
}

fn row_label(cfg: &RunConfig, res: Resolution) -> String {
    format!("{res} ({})", cfg.mode.label())
}

fn tune(cfg: &RunConfig, manifest: &Manifest, dir: &Path) -> CliResult<()> {
    let (_, parts, prepared) = eval_inputs(cfg, manifest)?;
    let grid = cfg.grid()?;
    let mut rows = Vec::new();
    for data in &parts {
        let preds = predictors::build(cfg, data.res, &data.all())?;
        let t = crate::pipeline::tune(preds.baseline.predictor.as_ref(), data, &grid)?;
        rows.push([
            row_label(cfg, data.res),
            t.index.to_string(),
            fmt4(t.threshold),
            fmt4(t.iou),
        ]);
    }
    report::write_rows(
        &dir.join("thresholds.csv"),
        ["label", "grid_index", "threshold", "val_iou"],
        &rows,
    )?;
    write_skips(&dir.join("skipped.csv"), &prepared)
}

fn eval(
    cfg: &RunConfig,
    manifest: &Manifest,
    dir: &Path,
    figures: bool,
) -> CliResult<Vec<MetricRow>> {
    let (_, parts, prepared) = eval_inputs(cfg, manifest)?;
    let grid = cfg.grid()?;
    let mut results: Vec<ResolutionResult> = Vec::new();
    for data in &parts {
        let preds = predictors::build(cfg, data.res, &data.all())?;
        results.push(resolution_study(
            &row_label(cfg, data.res),
            &preds,
            data,
            &grid,
        )?);
        if figures {
            render_figures(&results[results.len() - 1], data, dir)?;
        }
    }
    let rows: Vec<MetricRow> = results.iter().map(|r| r.row.clone()).collect();
    let per_image: Vec<_> = results.iter().flat_map(|r| r.per_image.clone()).collect();
    if cfg.wants(Format::Csv) {
        report::metric_csv(&dir.join("eval.csv"), &rows)?;
        report::image_csv(&dir.join("per_image.csv"), &per_image)?;
    }
    if cfg.wants(Format::Markdown) {
        let first = match cfg.mode {
            Mode::ArCorrected => "Resolution (AR-CR)",
            _ => "Resolution",
        };
        report::write_text(
            &dir.join("eval.md"),
            &report::metric_markdown("Performance by resolution", first, &rows),
        )?;
    }
    write_skips(&dir.join("skipped.csv"), &prepared)?;
    Ok(rows)
}

/// Contour overlay and quality map for the first test image.
fn render_figures(r: &ResolutionResult, data: &Partitioned, dir: &Path) -> CliResult<()> {
    let sample = &data.test[0];
    let pred = binarize(&r.test_maps[0], r.tuned.threshold);
    let fig = dir.join("figures");
    fs::create_dir_all(&fig)?;
    write_rgb8(
        &fig.join(format!("contours_{}_{}.png", r.res, sample.id)),
        &contour_overlay(&sample.image, &sample.gt, &pred)?,
    )?;
    let (_, qmap) = quality_map(&sample.gt, &pred)?;
    write_rgb8(
        &fig.join(format!("quality_{}_{}.png", r.res, sample.id)),
        &qmap,
    )?;
    Ok(())
}

fn snapshot_resolution(cfg: &RunConfig) -> CliResult<Resolution> {
    if let Some(s) = &cfg.snapshot_resolution {
        return s
            .parse()
            .map_err(|e: maskpipe::Error| CliError::Config(e.to_string()));
    }
    let ladder = cfg.parsed_resolutions()?;
    Ok(ladder
        .iter()
        .copied()
        .find(|r| r.height == 256)
        .unwrap_or(ladder[0]))
}

fn snapshot_inputs(
    cfg: &RunConfig,
    manifest: &Manifest,
    res: Option<Resolution>,
) -> CliResult<(Partitioned, predictors::PredictorSet)> {
    let res = match res {
        Some(r) => r,
        None => snapshot_resolution(cfg)?,
    };
    let m = ensure_split(manifest, cfg.ratios(), cfg.seed)?;
    let records = records_in(&m, &[Split::Val, Split::Test]);
    let mut prepared = prepare(&records, cfg.mode, &[res])?;
    let data = Partitioned::new(&m, res, prepared.by_resolution.remove(0))?;
    let preds = predictors::build(cfg, res, &data.all())?;
    Ok((data, preds))
}

fn write_tta(cfg: &RunConfig, study: &crate::pipeline::TtaStudy, dir: &Path) -> CliResult<()> {
    if cfg.wants(Format::Csv) {
        report::selection_csv(&dir.join("selection.csv"), &study.selection)?;
        report::methods_csv(&dir.join("methods.csv"), &study.methods)?;
    }
    if cfg.wants(Format::Markdown) {
        report::write_text(
            &dir.join("selection.md"),
            &report::selection_markdown(&study.selection),
        )?;
    }
    Ok(())
}

fn ensemble(
    cfg: &RunConfig,
    manifest: &Manifest,
    dir: &Path,
    res: Option<Resolution>,
) -> CliResult<Vec<MetricRow>> {
    let (data, preds) = snapshot_inputs(cfg, manifest, res)?;
    let grid = cfg.grid()?;
    let study = tta_study(&preds, &data, &cfg.methods()?, &grid)?;
    write_tta(cfg, &study, dir)?;
    let label = format!("{} ({}-Baseline)", data.res, cfg.mode.label());
    let ens = ensemble_study(&label, &preds, &data, &study, &cfg.top_k, &grid)?;
    if cfg.wants(Format::Csv) {
        report::metric_csv(&dir.join("ensemble.csv"), &ens.rows)?;
        let ranking: Vec<[String; 2]> = ens
            .ranking
            .iter()
            .enumerate()
            .map(|(i, id)| [(i + 1).to_string(), id.clone()])
            .collect();
        report::write_rows(&dir.join("ranking.csv"), ["rank", "snapshot"], &ranking)?;
    }
    if cfg.wants(Format::Markdown) {
        report::write_text(
            &dir.join("ensemble.md"),
            &report::metric_markdown("Snapshots, TTA and snapshot averaging", "Model", &ens.rows),
        )?;
    }
    Ok(ens.rows)
}

fn lr_schedule(dir: &Path) -> CliResult<()> {
    let s = LrSchedule::snapshot_default();
    let rows = (0..s.total_epochs)
        .map(|e| {
            Ok([
                e.to_string(),
                (e / s.cycle_len() + 1).to_string(),
                format!("{:.6e}", cyclic_lr(e, &s)?),
            ])
        })
        .collect::<CliResult<Vec<_>>>()?;
    report::write_rows(
        &dir.join("lr_schedule.csv"),
        ["epoch", "cycle", "learning_rate"],
        &rows,
    )
}

fn report(cfg: &RunConfig, manifest: &Manifest, dir: &Path) -> CliResult<()> {
    stats(manifest, dir, cfg)?;
    heatmap(manifest, dir, cfg)?;
    let eval_rows = eval(cfg, manifest, dir, true)?;
    let ens_rows = ensemble(cfg, manifest, dir, None)?;
    lr_schedule(dir)?;

    let mut md = String::from("# maskpipe report\n\n");
    md.push_str(&format!(
        "Mode: {} ({}). Seed: {}. Predictor: {:?}.\n\n",
        cfg.mode,
        cfg.mode.label(),
        cfg.seed,
        cfg.predictor
    ));
    if let Ok(text) = fs::read_to_string(dir.join("stats.md")) {
        md.push_str(&text);
        md.push('\n');
    }
    let first = match cfg.mode {
        Mode::ArCorrected => "Resolution (AR-CR)",
        _ => "Resolution",
    };
    md.push_str(&report::metric_markdown(
        "Performance by resolution",
        first,
        &eval_rows,
    ));
    md.push('\n');
    if let Ok(text) = fs::read_to_string(dir.join("selection.md")) {
        md.push_str(&text);
        md.push('\n');
    }
    md.push_str(&report::metric_markdown(
        "Snapshots, TTA and snapshot averaging",
        "Model",
        &ens_rows,
    ));
    md.push_str("\nFigures: `heatmap_jet.png`, `figures/contours_*.png` (red: ground truth, blue: prediction), `figures/quality_*.png` (SSIM quality maps, jet).\n");
    report::write_text(&dir.join("report.md"), &md)
}

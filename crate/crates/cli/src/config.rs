//! Run configuration: a flat TOML file, overridable from the command line.
//!
//! ```toml
//! manifest = "data/manifest.csv"
//! out = "out"
//! mode = "cropped"            # original | cropped | ar_corrected
//! resolutions = ["64x64", "256x256"]
//! seed = 42
//! predictor = "synthetic"     # synthetic | files
//! ```
//!
//! Relative paths in a config file resolve against the file's directory.
//! A `provenance.json` written by any command is accepted in place of the
//! TOML file and replays that run.

use std::fs;
use std::path::{Path, PathBuf};

use maskpipe::optimize::{ThresholdGrid, TtaMethod};
use maskpipe::preprocess::{Mode, Resolution};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Synthetic,
    Files,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Markdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub mode: Mode,
    /// `HxW` strings. Empty means the mode's default ladder.
    pub resolutions: Vec<String>,
    /// Width/height ratio for `ar_corrected`; measured from the lung-cropped
    /// cohort when absent.
    pub aspect_ratio: Option<f64>,
    pub grid_count: usize,
    pub tta_methods: Vec<String>,
    pub top_k: Vec<usize>,
    pub seed: u64,
    /// Train/val/test ratios used when the manifest carries no split.
    pub split_ratios: [f64; 3],
    pub formats: Vec<Format>,
    pub predictor: PredictorKind,
    /// Sidecar CSV (`snapshot_id,dir`) for the `files` predictor.
    pub snapshots: Option<PathBuf>,
    pub synthetic_fidelity: f64,
    pub synthetic_blur: usize,
    pub synthetic_snapshots: usize,
    /// Resolution for TTA selection and snapshot averaging. Defaults to
    /// 256x256 when in the ladder, else the first entry.
    pub snapshot_resolution: Option<String>,
    pub heatmap_side: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            out: PathBuf::from("out"),
            mode: Mode::Cropped,
            resolutions: Vec::new(),
            aspect_ratio: None,
            grid_count: ThresholdGrid::DEFAULT_COUNT,
            tta_methods: TtaMethod::ALL.iter().map(|m| m.id().to_string()).collect(),
            top_k: vec![2, 3, 4, 5, 6],
            seed: 42,
            split_ratios: [0.7, 0.1, 0.2],
            formats: vec![Format::Csv, Format::Markdown],
            predictor: PredictorKind::Synthetic,
            snapshots: None,
            synthetic_fidelity: 0.6,
            synthetic_blur: 2,
            synthetic_snapshots: 8,
            snapshot_resolution: None,
            heatmap_side: 256,
        }
    }
}

#[derive(Deserialize)]
struct ProvenanceFile {
    config: RunConfig,
}

impl RunConfig {
    /// Reads TOML, or the `config` member of a provenance JSON file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("{}: cannot read config: {e}", path.display()))
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            serde_json::from_str::<ProvenanceFile>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                .config
        } else {
            toml::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.manifest);
        rebase(&mut cfg.out);
        if let Some(s) = cfg.snapshots.as_mut() {
            rebase(s);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.manifest.as_os_str().is_empty() {
            return bad("no manifest given (set `manifest` or pass --manifest)".into());
        }
        if self.grid_count < 2 {
            return bad(format!(
                "grid_count must be at least 2, got {}",
                self.grid_count
            ));
        }
        if self.tta_methods.is_empty() {
            return bad("tta_methods is empty".into());
        }
        self.methods()?;
        self.parsed_resolutions()?;
        if self.top_k.contains(&0) {
            return bad("top_k entries must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.synthetic_fidelity) {
            return bad(format!(
                "synthetic_fidelity {} outside [0,1]",
                self.synthetic_fidelity
            ));
        }
        if self.synthetic_snapshots == 0 {
            return bad("synthetic_snapshots must be at least 1".into());
        }
        if self.predictor == PredictorKind::Files && self.snapshots.is_none() {
            return bad("predictor = \"files\" needs a `snapshots` sidecar CSV".into());
        }
        if self.heatmap_side == 0 {
            return bad("heatmap_side must be positive".into());
        }
        if let Some(ar) = self.aspect_ratio {
            if !(ar > 0.0 && ar <= 1.0) {
                return bad(format!("aspect_ratio {ar} must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn methods(&self) -> CliResult<Vec<TtaMethod>> {
        self.tta_methods
            .iter()
            .map(|s| {
                s.parse::<TtaMethod>()
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect()
    }

    pub fn parsed_resolutions(&self) -> CliResult<Vec<Resolution>> {
        self.resolutions
            .iter()
            .map(|s| {
                s.parse::<Resolution>()
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect()
    }

    pub fn grid(&self) -> CliResult<ThresholdGrid> {
        ThresholdGrid::new(self.grid_count).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn ratios(&self) -> (f64, f64, f64) {
        let [a, b, c] = self.split_ratios;
        (a, b, c)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_rebase() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "manifest = \"m.csv\"\nmode = \"ar_corrected\"\nresolutions = [\"64x32\"]\nseed = 7\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.manifest, dir.path().join("m.csv"));
        assert_eq!(cfg.mode, Mode::ArCorrected);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grid_count, 200);
        assert_eq!(
            cfg.parsed_resolutions().unwrap(),
            vec![Resolution::new(64, 32)]
        );
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "manifest = \"m.csv\"\nbogus = 1\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Config(_))));
        let cfg = RunConfig {
            manifest: "m.csv".into(),
            grid_count: 1,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg = RunConfig {
            manifest: "m.csv".into(),
            tta_methods: vec!["M9".into()],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn provenance_json_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            manifest: "/abs/m.csv".into(),
            seed: 3,
            ..Default::default()
        };
        let path = dir.path().join("provenance.json");
        let doc = serde_json::json!({ "command": "eval", "config": cfg });
        fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        // Relative paths are rebased onto the config file's directory.
        assert_eq!(loaded.out, dir.path().join("out"));
        assert_eq!(
            loaded,
            RunConfig {
                out: dir.path().join("out"),
                ..cfg
            }
        );
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maskpipe::preprocess::Mode;
use maskpipe_cli::config::{Format, PredictorKind};
use maskpipe_cli::{demo, run, CliError, CliResult, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "maskpipe",
    version,
    about = "Post-model evaluation pipeline for lesion segmentation studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Crop and resample every record into <out>/<mode>/<HxW>/.
    Prep(RunArgs),
    /// Assign a seeded train/val/test split and write the manifest.
    Split(RunArgs),
    /// Cohort statistics and demographic counts.
    Stats(RunArgs),
    /// Averaged lesion-mask heatmap.
    Heatmap(RunArgs),
    /// Test metrics per resolution at the validation-tuned threshold.
    Eval(RunArgs),
    /// Validation threshold search per resolution.
    Tune(RunArgs),
    /// Optimal TTA combination per snapshot.
    Tta(RunArgs),
    /// Snapshot, snapshot+TTA and top-k averaging table.
    Ensemble(RunArgs),
    /// Everything above plus figures and report.md.
    Report(RunArgs),
    /// Write a small synthetic cohort with a manifest.
    Demo(DemoArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a provenance.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// original | cropped | ar_corrected
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated HxW list, e.g. 64x64,256x256.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<String>>,
    #[arg(long)]
    aspect_ratio: Option<f64>,
    #[arg(long)]
    grid_count: Option<usize>,
    /// Comma-separated subset of M1..M8.
    #[arg(long, value_delimiter = ',')]
    tta_methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    top_k: Option<Vec<usize>>,
    /// csv, markdown or both (comma-separated).
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<String>>,
    /// synthetic | files
    #[arg(long)]
    predictor: Option<String>,
    /// Sidecar CSV mapping snapshot ids to prediction directories.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    fidelity: Option<f64>,
    #[arg(long)]
    blur: Option<usize>,
    #[arg(long)]
    synthetic_snapshots: Option<usize>,
    #[arg(long)]
    snapshot_resolution: Option<String>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> CliResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::Config(format!("unknown {what} {s:?}")))
}

impl RunArgs {
    fn into_config(self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.manifest {
            cfg.manifest = v;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v
                .parse::<Mode>()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.resolutions {
            cfg.resolutions = v;
        }
        if let Some(v) = self.aspect_ratio {
            cfg.aspect_ratio = Some(v);
        }
        if let Some(v) = self.grid_count {
            cfg.grid_count = v;
        }
        if let Some(v) = self.tta_methods {
            cfg.tta_methods = v;
        }
        if let Some(v) = self.top_k {
            cfg.top_k = v;
        }
        if let Some(v) = self.formats {
            cfg.formats = v
                .iter()
                .map(|f| parse_enum::<Format>("format", f))
                .collect::<CliResult<_>>()?;
        }
        if let Some(v) = self.predictor {
            cfg.predictor = parse_enum::<PredictorKind>("predictor", &v)?;
        }
        if let Some(v) = self.snapshots {
            cfg.snapshots = Some(v);
        }
        if let Some(v) = self.fidelity {
            cfg.synthetic_fidelity = v;
        }
        if let Some(v) = self.blur {
            cfg.synthetic_blur = v;
        }
        if let Some(v) = self.synthetic_snapshots {
            cfg.synthetic_snapshots = v;
        }
        if let Some(v) = self.snapshot_resolution {
            cfg.snapshot_resolution = Some(v);
        }
        Ok(cfg)
    }
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("MASKPIPE_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!(
                "MASKPIPE_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cmd: Cmd) -> CliResult<String> {
    init_threads()?;
    let (command, args) = match cmd {
        Cmd::Demo(a) => {
            demo::write_demo(&a.out, a.n, a.seed)?;
            return Ok(a.out.join("manifest.csv").display().to_string());
        }
        Cmd::Prep(a) => (Command::Prep, a),
        Cmd::Split(a) => (Command::Split, a),
        Cmd::Stats(a) => (Command::Stats, a),
        Cmd::Heatmap(a) => (Command::Heatmap, a),
        Cmd::Eval(a) => (Command::Eval, a),
        Cmd::Tune(a) => (Command::Tune, a),
        Cmd::Tta(a) => (Command::Tta, a),
        Cmd::Ensemble(a) => (Command::Ensemble, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let out = run(command, args.into_config()?)?;
    Ok(out.display().to_string())
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Prep(_) => "prep",
        Cmd::Split(_) => "split",
        Cmd::Stats(_) => "stats",
        Cmd::Heatmap(_) => "heatmap",
        Cmd::Eval(_) => "eval",
        Cmd::Tune(_) => "tune",
        Cmd::Tta(_) => "tta",
        Cmd::Ensemble(_) => "ensemble",
        Cmd::Report(_) => "report",
        Cmd::Demo(_) => "demo",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match dispatch(cli.command) {
        Ok(path) => {
            println!("{path}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::to_string(&e.record(name)).unwrap_or_else(|_| e.to_string());
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

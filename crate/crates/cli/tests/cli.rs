mod support;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use support::{csv_files, demo_cohort, maskpipe, read_csv};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_record(stderr: &str) -> serde_json::Value {
    let line = stderr
        .lines()
        .rev()
        .find(|l| l.trim_start().starts_with('{'))
        .expect("json line on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn invalid_option_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = demo_cohort(dir.path(), 3, 1);
    let (code, _, err) = maskpipe(
        &["eval", "--manifest", s(&manifest), "--grid-count", "1"],
        dir.path(),
    );
    assert_eq!(code, 2, "{err}");
    let rec = error_record(&err);
    assert_eq!(rec["exit_code"], 2);
    assert_eq!(rec["command"], "eval");
}

#[test]
fn missing_manifest_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = maskpipe(&["stats", "--manifest", "nope.csv"], dir.path());
    assert_eq!(code, 3, "{err}");
    assert_eq!(error_record(&err)["exit_code"], 3);
    assert!(!dir.path().join("out").join("stats").exists());
}

#[test]
fn split_of_287_patients() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = demo_cohort(dir.path(), 1, 1);
    let data = manifest.parent().unwrap();
    let mut csv = String::from("patient_id,sex,age,cxr_path,lung_mask_path,tb_mask_path\n");
    for i in 0..287 {
        writeln!(
            csv,
            "Q{i:03},F,40,images/P000.png,lungs/P000.png,lesions/P000.png"
        )
        .unwrap();
    }
    let big = data.join("big.csv");
    std::fs::write(&big, csv).unwrap();

    let run = |out: &str| {
        let (code, _, err) = maskpipe(
            &["split", "--manifest", s(&big), "--out", out, "--seed", "9"],
            dir.path(),
        );
        assert_eq!(code, 0, "{err}");
        dir.path().join(out).join("split")
    };
    let a = run("a");
    let sizes: Vec<(String, String)> = read_csv(&a.join("split_sizes.csv"))
        .into_iter()
        .map(|r| (r["split"].clone(), r["count"].clone()))
        .collect();
    let want = [("train", "201"), ("val", "29"), ("test", "57")]
        .map(|(k, v)| (k.to_string(), v.to_string()));
    assert_eq!(sizes, want);
    let b = run("b");
    assert_eq!(
        std::fs::read(a.join("manifest.csv")).unwrap(),
        std::fs::read(b.join("manifest.csv")).unwrap()
    );
}

#[test]
fn aspect_corrected_prep_writes_height_by_width_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = demo_cohort(dir.path(), 2, 4);
    let (code, _, err) = maskpipe(
        &[
            "prep",
            "--manifest",
            s(&manifest),
            "--mode",
            "ar_corrected",
            "--aspect-ratio",
            "0.965",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out").join("ar_corrected");
    let dirs: BTreeSet<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    let want: BTreeSet<String> = [
        "64x32", "128x96", "256x224", "512x480", "768x736", "1024x960",
    ]
    .iter()
    .map(|d| d.to_string())
    .collect();
    assert_eq!(dirs, want);
    let dims = maskpipe::io::image_dims(&out.join("256x224").join("P000_img.png")).unwrap();
    assert_eq!(dims, (224, 256));
}

#[test]
fn provenance_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = demo_cohort(dir.path(), 20, 2);
    let (code, stdout, err) = maskpipe(
        &[
            "eval",
            "--manifest",
            s(&manifest),
            "--out",
            "first",
            "--resolutions",
            "64x64",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("eval"));
    let first = dir.path().join("first").join("eval");
    let provenance = first.join("provenance.json");
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&provenance).unwrap()).unwrap();
    assert_eq!(doc["command"], "eval");
    assert_eq!(doc["config"]["seed"], 3);

    let (code, _, err) = maskpipe(
        &["eval", "--config", s(&provenance), "--out", "second"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let a = csv_files(&first);
    let b = csv_files(&dir.path().join("second").join("eval"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn stats_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = demo_cohort(dir.path(), 6, 5);
    for cmd in ["stats", "heatmap"] {
        let (code, _, err) = maskpipe(&[cmd, "--manifest", s(&manifest)], dir.path());
        assert_eq!(code, 0, "{cmd}: {err}");
    }
    let out = dir.path().join("out");
    let stats = read_csv(&out.join("stats").join("stats.csv"));
    assert_eq!(stats.len(), 2);
    assert!(out.join("stats").join("demographics.csv").is_file());
    assert!(out.join("heatmap").join("heatmap_gray.png").is_file());
    assert!(out.join("heatmap").join("heatmap_jet.png").is_file());
}

//! CSV and markdown table writers. Numbers print with four decimals.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::CliResult;
use crate::pipeline::{ImageRow, MethodRow, MetricRow, SelectionRow};

pub fn fmt4(v: f64) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn write_rows<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: &[[String; N]],
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn metric_csv(path: &Path, rows: &[MetricRow]) -> CliResult<()> {
    let header = [
        "label",
        "n",
        "iou",
        "ci_lower",
        "ci_upper",
        "dice",
        "ssim",
        "sre",
        "opt_t",
        "macro_iou",
        "macro_dice",
        "sre_pos_inf",
        "sre_neg_inf",
    ];
    let body: Vec<[String; 13]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                r.n.to_string(),
                fmt4(r.iou),
                fmt4(r.ci_lower),
                fmt4(r.ci_upper),
                fmt4(r.dice),
                fmt4(r.ssim),
                fmt4(r.sre),
                fmt4(r.opt_t),
                fmt4(r.macro_iou),
                fmt4(r.macro_dice),
                r.sre_pos_inf.to_string(),
                r.sre_neg_inf.to_string(),
            ]
        })
        .collect();
    write_rows(path, header, &body)
}

/// `| Resolution | IoU | Dice | SSIM | SRE | Opt. T |` with the interval in
/// parentheses after the IoU.
pub fn metric_markdown(title: &str, first_col: &str, rows: &[MetricRow]) -> String {
    let mut s = format!("### {title}\n\n| {first_col} | IoU | Dice | SSIM | SRE | Opt. T |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} ({},{}) | {} | {} | {} | {} |",
            r.label,
            fmt4(r.iou),
            fmt4(r.ci_lower),
            fmt4(r.ci_upper),
            fmt4(r.dice),
            fmt4(r.ssim),
            fmt4(r.sre),
            fmt4(r.opt_t)
        );
    }
    let inf: usize = rows.iter().map(|r| r.sre_pos_inf + r.sre_neg_inf).sum();
    if inf > 0 {
        s.push_str(
            "\nSRE averages finite values; images with infinite SRE are counted in the CSV.\n",
        );
    }
    s
}

pub fn image_csv(path: &Path, rows: &[ImageRow]) -> CliResult<()> {
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                r.patient_id.clone(),
                fmt4(r.iou),
                fmt4(r.dice),
                fmt4(r.ssim),
                fmt4(r.sre),
            ]
        })
        .collect();
    write_rows(
        path,
        ["label", "patient_id", "iou", "dice", "ssim", "sre"],
        &body,
    )
}

pub fn selection_csv(path: &Path, rows: &[SelectionRow]) -> CliResult<()> {
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.snapshot.clone(),
                r.method.to_string(),
                r.combination.clone(),
                fmt4(r.threshold),
                fmt4(r.val_iou),
            ]
        })
        .collect();
    write_rows(
        path,
        ["snapshot", "method", "combination", "threshold", "val_iou"],
        &body,
    )
}

pub fn selection_markdown(rows: &[SelectionRow]) -> String {
    let mut s = String::from("### Optimal TTA combination per snapshot\n\n| Snapshot | Opt. TTA combination |\n|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {} ({}) |", r.snapshot, r.combination, r.method);
    }
    s
}

pub fn methods_csv(path: &Path, rows: &[MethodRow]) -> CliResult<()> {
    let body: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.snapshot.clone(),
                r.method.to_string(),
                fmt4(r.threshold),
                fmt4(r.val_iou),
            ]
        })
        .collect();
    write_rows(path, ["snapshot", "method", "threshold", "val_iou"], &body)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_decimals_and_specials() {
        assert_eq!(fmt4(0.48594), "0.4859");
        assert_eq!(fmt4(1.0), "1.0000");
        assert_eq!(fmt4(f64::NAN), "n/a");
        assert_eq!(fmt4(f64::INFINITY), "inf");
    }

    #[test]
    fn markdown_row_shape() {
        let r = MetricRow {
            label: "256x256 (CR)".into(),
            n: 57,
            iou: 0.4859,
            ci_lower: 0.3561,
            ci_upper: 0.6157,
            dice: 0.654,
            ssim: 0.772,
            sre: 29.1329,
            opt_t: 0.995,
            macro_iou: 0.4,
            macro_dice: 0.5,
            sre_pos_inf: 0,
            sre_neg_inf: 0,
        };
        let md = metric_markdown("t", "Resolution", &[r]);
        assert!(md.contains(
            "| 256x256 (CR) | 0.4859 (0.3561,0.6157) | 0.6540 | 0.7720 | 29.1329 | 0.9950 |"
        ));
    }
}

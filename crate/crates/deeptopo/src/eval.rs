//! Evaluation: per-image predictions and metric reports.

use std::fs;
use std::path::Path;

use deeptopo_core::metrics::{evaluate_image, Aggregate, EvalReport, ImageRecord};
use deeptopo_core::model::Model;

use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::pnm::{self, Raster};

pub const PREDICTIONS: &str = "predictions";
pub const REPORT_TSV: &str = "report.tsv";
pub const REPORT_TXT: &str = "report.txt";
pub const SUMMARY_TSV: &str = "summary.tsv";

/// Column names of the per-image report.
pub const COLUMNS: [&str; 8] = [
    "id",
    "s_alpha",
    "f_beta_w",
    "mean_e",
    "mae",
    "iou",
    "skeleton_recall",
    "cc_delta",
];

/// Scores every record. With a model, its evaluation-mode probabilities are
/// the predictions; without one the ground truth is scored against itself.
pub fn evaluate(
    model: Option<&Model<f32>>,
    records: &[Record],
    threshold: f64,
) -> Result<(EvalReport, Vec<Vec<f64>>)> {
    let mut rows = Vec::with_capacity(records.len());
    let mut preds = Vec::with_capacity(records.len());
    for r in records {
        let pred: Vec<f64> = match model {
            Some(m) => m
                .predict(&r.image.cast())?
                .data()
                .iter()
                .map(|&v| f64::from(v))
                .collect(),
            None => r.mask.to_f64(),
        };
        rows.push(evaluate_image(
            &r.entry.id,
            &pred,
            &r.mask,
            &r.skeleton,
            threshold,
        )?);
        preds.push(pred);
    }
    Ok((EvalReport::new(rows), preds))
}

fn row(r: &ImageRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        r.id, r.s_alpha, r.f_beta_w, r.mean_e, r.mae, r.iou, r.skeleton_recall, r.cc_delta
    )
}

pub fn report_tsv(report: &EvalReport) -> String {
    let mut out = COLUMNS.join("\t") + "\n";
    report.records.iter().for_each(|r| out.push_str(&row(r)));
    out
}

pub fn summary_tsv(a: &Aggregate, n: usize) -> String {
    format!(
        "metric\tvalue\nimages\t{n}\ns_alpha\t{}\nf_beta_w\t{}\nmean_e\t{}\nmae\t{}\niou\t{}\nskeleton_recall\t{}\ncc_delta\t{}\n",
        a.s_alpha, a.f_beta_w, a.mean_e, a.mae, a.iou, a.skeleton_recall, a.cc_delta
    )
}

pub fn report_text(report: &EvalReport) -> String {
    let mut out = format!(
        "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "id", "S_alpha", "F_w", "mE", "MAE", "IoU", "skel_rec", "cc_delta"
    );
    for r in &report.records {
        out.push_str(&format!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8}\n",
            r.id, r.s_alpha, r.f_beta_w, r.mean_e, r.mae, r.iou, r.skeleton_recall, r.cc_delta
        ));
    }
    let a = &report.aggregate;
    out.push_str(&format!(
        "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3}\n",
        "mean", a.s_alpha, a.f_beta_w, a.mean_e, a.mae, a.iou, a.skeleton_recall, a.cc_delta
    ));
    out
}

/// Writes `predictions/<id>.pgm` and the three report files under `dir`.
pub fn write_outputs(
    dir: &Path,
    records: &[Record],
    preds: &[Vec<f64>],
    report: &EvalReport,
) -> Result<()> {
    let pred_dir = dir.join(PREDICTIONS);
    fs::create_dir_all(&pred_dir).map_err(Error::io(&pred_dir))?;
    for (r, p) in records.iter().zip(preds) {
        let raster = Raster {
            width: r.mask.w,
            height: r.mask.h,
            channels: 1,
            data: p.iter().map(|&v| pnm::quantize(v)).collect(),
        };
        pnm::write(&pred_dir.join(format!("{}.pgm", r.entry.id)), &raster)?;
    }
    for (name, text) in [
        (REPORT_TSV, report_tsv(report)),
        (
            SUMMARY_TSV,
            summary_tsv(&report.aggregate, report.records.len()),
        ),
        (REPORT_TXT, report_text(report)),
    ] {
        let p = dir.join(name);
        fs::write(&p, text).map_err(Error::io(&p))?;
    }
    Ok(())
}

//! The subcommands as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use deeptopo_core::backbone::Variant;
use deeptopo_core::gradsuite::{self, CaseResult};
use deeptopo_core::metrics::{Aggregate, EvalReport};
use deeptopo_core::model::Model;
use deeptopo_core::synth::{self, Zone};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::{self, Record};
use crate::error::{Error, Result};
use crate::eval;
use crate::train::{self, EpochLog, TrainOutcome};

pub const TRAIN_SPLIT: &str = "train";
pub const EVAL_SPLIT: &str = "eval";
pub const EVAL_OUT: &str = "eval";
pub const SWEEP_GRID: [f64; 5] = [0.0, 0.05, 0.1, 0.2, 0.5];
pub const SWEEP_TSV: &str = "sweep.tsv";
pub const SWEEP_TXT: &str = "sweep.txt";
pub const ABLATION_TSV: &str = "ablation.tsv";
pub const ABLATION_TXT: &str = "ablation.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataOptions {
    pub out: PathBuf,
    pub count: usize,
    pub eval_count: usize,
    pub size: usize,
    pub zones: Vec<Zone>,
    pub seed: u64,
}

impl Default for GenDataOptions {
    fn default() -> Self {
        GenDataOptions {
            out: PathBuf::from("data"),
            count: 300,
            eval_count: 60,
            size: 96,
            zones: Zone::ALL.to_vec(),
            seed: 0,
        }
    }
}

fn is_nonempty_dir(dir: &Path) -> Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(Error::io(dir)(e)),
    }
}

/// Writes `train/` with samples `0..count` and `eval/` with samples
/// `count..count + eval_count`; returns the two manifest paths.
pub fn gen_data(opts: &GenDataOptions) -> Result<Vec<PathBuf>> {
    if opts.size < synth::MIN_SIZE {
        return Err(Error::usage(format!(
            "--size {}: must be at least {}",
            opts.size,
            synth::MIN_SIZE
        )));
    }
    if opts.count == 0 {
        return Err(Error::usage("--count: must be positive"));
    }
    if opts.zones.is_empty() {
        return Err(Error::usage("--zones: at least one zone is required"));
    }
    if is_nonempty_dir(&opts.out)? {
        return Err(Error::usage(format!(
            "{}: refusing to write into a non-empty directory",
            opts.out.display()
        )));
    }
    let mut manifests = Vec::new();
    for (split, range) in [
        (TRAIN_SPLIT, 0..opts.count),
        (EVAL_SPLIT, opts.count..opts.count + opts.eval_count),
    ] {
        if range.is_empty() {
            continue;
        }
        let ids: Vec<String> = range.clone().map(synth::sample_id).collect();
        let samples = synth::generate_range(range, opts.size, &opts.zones, opts.seed)?;
        let dir = opts.out.join(split);
        dataset::write_dataset(&dir, &ids.into_iter().zip(samples).collect::<Vec<_>>())?;
        manifests.push(dir.join(dataset::MANIFEST));
    }
    Ok(manifests)
}

/// Trains on `data_dir/train`, writing under `out_dir`.
pub fn train(cfg: &RunConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let records = dataset::read_dataset(&cfg.train_dir())?;
    train::train(cfg, &records, on_epoch)
}

/// Scores `model` (or the ground truth itself when `None`) on `records` and
/// writes predictions and reports to `out`.
pub fn evaluate(
    model: Option<&Model<f32>>,
    records: &[Record],
    threshold: f64,
    out: &Path,
) -> Result<EvalReport> {
    let (report, preds) = eval::evaluate(model, records, threshold)?;
    eval::write_outputs(out, records, &preds, &report)?;
    Ok(report)
}

/// Loads a checkpoint and evaluates it on the dataset at `data`.
pub fn eval_checkpoint(
    ckpt: &Path,
    data: &Path,
    threshold: Option<f64>,
    out: &Path,
) -> Result<EvalReport> {
    let (cfg, model) = checkpoint::load(ckpt)?;
    let records = dataset::read_dataset(data)?;
    train::check_records(&cfg, &records, "evaluation")?;
    evaluate(
        Some(&model),
        &records,
        threshold.unwrap_or(cfg.threshold),
        out,
    )
}

/// Runs the operator suite; with `inject_fault` the deliberately wrong
/// gradient case is appended.
pub fn gradcheck(seeds: u64, inject_fault: bool) -> Result<Vec<CaseResult>> {
    let mut results = gradsuite::run_suite(seeds)?;
    if inject_fault {
        results.push(gradsuite::run_case(&gradsuite::faulty_case(), seeds)?);
    }
    Ok(results)
}

pub fn gradcheck_report(results: &[CaseResult]) -> String {
    let mut out = format!(
        "{:<28} {:>5} {:>12} {:>9}  status\n",
        "case", "seeds", "max_rel_err", "elements"
    );
    for r in results {
        out.push_str(&format!(
            "{:<28} {:>5} {:>12.3e} {:>9}  {}\n",
            r.name,
            r.seeds,
            r.worst.max_rel_err,
            r.worst.elements_checked,
            if r.passed() { "pass" } else { "FAIL" }
        ));
    }
    out
}

/// One trained and evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub config: RunConfig,
    pub epochs: Vec<EpochLog>,
    pub metrics: Aggregate,
}

fn train_and_eval(
    cfg: &RunConfig,
    train_set: &[Record],
    eval_set: &[Record],
    on_epoch: &mut dyn FnMut(&str, &EpochLog),
    label: &str,
) -> Result<Row> {
    let outcome = train::train(cfg, train_set, |log| on_epoch(label, log))?;
    let report = evaluate(
        Some(&outcome.model),
        eval_set,
        cfg.threshold,
        &cfg.out_dir.join(EVAL_OUT),
    )?;
    Ok(Row {
        label: label.to_string(),
        config: cfg.clone(),
        epochs: outcome.epochs,
        metrics: report.aggregate,
    })
}

fn load_splits(cfg: &RunConfig) -> Result<(Vec<Record>, Vec<Record>)> {
    let train_set = dataset::read_dataset(&cfg.train_dir())?;
    let eval_set = dataset::read_dataset(&cfg.eval_dir())?;
    train::check_records(cfg, &train_set, "training")?;
    train::check_records(cfg, &eval_set, "evaluation")?;
    Ok((train_set, eval_set))
}

/// Directory name of one sweep point.
pub fn lambda_dir(lambda: f64) -> String {
    format!("lambda_{lambda}")
}

/// One model per grid value, all sharing data and seed; each is written to
/// `out_dir/lambda_<value>`. The grid overrides any configured or pinned λ.
pub fn sweep_lambda(
    cfg: &RunConfig,
    grid: &[f64],
    mut on_epoch: impl FnMut(&str, &EpochLog),
) -> Result<Vec<Row>> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut c = cfg.clone();
        c.loss.lambda = lambda;
        c.out_dir = cfg.out_dir.join(lambda_dir(lambda));
        c.validate()?;
        points.push(c);
    }
    let (train_set, eval_set) = load_splits(cfg)?;
    let rows = points
        .iter()
        .map(|c| {
            train_and_eval(
                c,
                &train_set,
                &eval_set,
                &mut on_epoch,
                &c.loss.lambda.to_string(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    write_table(&cfg.out_dir, SWEEP_TSV, &sweep_tsv(&rows))?;
    write_table(&cfg.out_dir, SWEEP_TXT, &sweep_text(&rows))?;
    Ok(rows)
}

/// The four variants in table order, sharing data and seed; each is written
/// to `out_dir/<variant name>`.
pub fn ablate(cfg: &RunConfig, mut on_epoch: impl FnMut(&str, &EpochLog)) -> Result<Vec<Row>> {
    cfg.validate()?;
    let (train_set, eval_set) = load_splits(cfg)?;
    let rows = Variant::ALL
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.model.variant = v;
            c.out_dir = cfg.out_dir.join(v.name());
            train_and_eval(&c, &train_set, &eval_set, &mut on_epoch, v.label())
        })
        .collect::<Result<Vec<_>>>()?;
    write_table(&cfg.out_dir, ABLATION_TSV, &ablation_tsv(&rows))?;
    write_table(&cfg.out_dir, ABLATION_TXT, &ablation_text(&rows))?;
    Ok(rows)
}

fn write_table(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(Error::io(&p))
}

pub fn sweep_tsv(rows: &[Row]) -> String {
    let mut out = String::from("lambda\ts_alpha\tf_beta_w\tmean_e\tmae\n");
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.label, m.s_alpha, m.f_beta_w, m.mean_e, m.mae
        ));
    }
    out
}

pub fn sweep_text(rows: &[Row]) -> String {
    let mut out = format!(
        "{:<12} {:>8} {:>8} {:>8} {:>8}\n",
        "lambda", "S_alpha", "F_w", "mE", "MAE"
    );
    for r in rows {
        let m = &r.metrics;
        let label = if r.config.loss.lambda == 0.0 {
            format!("{} (No Aux)", r.label)
        } else {
            r.label.clone()
        };
        out.push_str(&format!(
            "{label:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            m.s_alpha, m.f_beta_w, m.mean_e, m.mae
        ));
    }
    out
}

pub fn ablation_tsv(rows: &[Row]) -> String {
    let mut out =
        String::from("variant\ts_alpha\tf_beta_w\tmean_e\tmae\tiou\tskeleton_recall\tcc_delta\n");
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.label, m.s_alpha, m.f_beta_w, m.mean_e, m.mae, m.iou, m.skeleton_recall, m.cc_delta
        ));
    }
    out
}

pub fn ablation_text(rows: &[Row]) -> String {
    let mut out = format!(
        "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "variant", "S_alpha", "F_w", "mE", "MAE", "IoU", "skel_rec", "cc_delta"
    );
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3}\n",
            r.label, m.s_alpha, m.f_beta_w, m.mean_e, m.mae, m.iou, m.skeleton_recall, m.cc_delta
        ));
    }
    out
}

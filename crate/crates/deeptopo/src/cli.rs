//! Argument parsing and dispatch for the `deeptopo` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use deeptopo_core::synth::Zone;

use crate::commands::{self, GenDataOptions, Row, SWEEP_GRID};
use crate::config::{read_pairs, RunConfig};
use crate::error::{Error, Result, EXIT_GRADCHECK, EXIT_USAGE};
use crate::train::EpochLog;

#[derive(Debug, Parser)]
#[command(
    name = "deeptopo",
    version,
    about = "Topology-aware segmentation: data, training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic train/eval corpus.
    GenData(GenDataArgs),
    /// Train one model on DATA_DIR/train.
    Train(RunArgs),
    /// Evaluate a checkpoint and write predictions and reports.
    Eval(EvalArgs),
    /// Check every operator's gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate one model per loss weight.
    SweepLambda(RunArgs),
    /// Train and evaluate the four module ablations.
    Ablate(RunArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output root; must be empty or absent.
    #[arg(long, default_value = "data")]
    out: PathBuf,
    /// Training samples.
    #[arg(long, default_value_t = 300)]
    count: usize,
    /// Held-out samples, indexed after the training ones.
    #[arg(long, default_value_t = 60)]
    eval_count: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 96)]
    size: usize,
    /// Comma-separated zones, cycled over sample indices.
    #[arg(long, value_delimiter = ',', value_parser = parse_zone, default_value = "epipelagic,mesopelagic,abyssal")]
    zones: Vec<Zone>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_zone(s: &str) -> std::result::Result<Zone, String> {
    Zone::parse(s).ok_or_else(|| format!("unknown zone {s:?}"))
}

#[derive(Debug, Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// toy or paper.
    #[arg(long)]
    profile: Option<String>,
    /// full, baseline, wcap_only or atrm_only.
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Any configuration key, applied after the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => read_pairs(p)?,
            None => Vec::new(),
        };
        let named = [
            ("profile", &self.profile),
            ("ablation", &self.ablation),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.lr),
            ("lambda", &self.lambda),
            ("seed", &self.seed),
            ("data_dir", &self.data_dir),
            ("out_dir", &self.out_dir),
        ];
        let mut overrides: Vec<(String, String)> = named
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set {s:?}: expected KEY=VALUE")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        RunConfig::resolve(&file, &overrides)
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint directory; required unless --gt-bypass is given.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory to score.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for predictions and reports.
    #[arg(long)]
    out: PathBuf,
    /// Binarization threshold; defaults to the checkpoint's.
    #[arg(long)]
    threshold: Option<f64>,
    /// Score the ground truth against itself instead of a model.
    #[arg(long)]
    gt_bypass: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Random instances per case.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Add a case with a deliberately wrong gradient.
    #[arg(long)]
    inject_fault: bool,
}

fn epoch_line(label: &str, log: &EpochLog) {
    let prefix = if label.is_empty() {
        String::new()
    } else {
        format!("[{label}] ")
    };
    println!(
        "{prefix}epoch {:>3}  l_seg {:.6}  l_rec {:.6}  l_total {:.6}",
        log.epoch, log.seg, log.rec, log.total
    );
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData(a) => {
            let opts = GenDataOptions {
                out: a.out,
                count: a.count,
                eval_count: a.eval_count,
                size: a.size,
                zones: a.zones,
                seed: a.seed,
            };
            for m in commands::gen_data(&opts)? {
                println!("{}", m.display());
            }
        }
        Command::Train(a) => {
            let cfg = a.resolve()?;
            let outcome = commands::train(&cfg, |log| epoch_line("", log))?;
            println!("final checkpoint: {}", outcome.final_dir.display());
            println!(
                "best checkpoint: {} (epoch {})",
                outcome.best_dir.display(),
                outcome.best_epoch
            );
        }
        Command::Eval(a) => {
            if let Some(t) = a.threshold {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::Usage(format!("--threshold {t}: must lie in (0, 1)")));
                }
            }
            let report = match (&a.checkpoint, a.gt_bypass) {
                (Some(_), true) => {
                    return Err(Error::Usage(
                        "--checkpoint and --gt-bypass are exclusive".into(),
                    ))
                }
                (None, false) => {
                    return Err(Error::Usage(
                        "--checkpoint is required without --gt-bypass".into(),
                    ))
                }
                (Some(ckpt), false) => {
                    commands::eval_checkpoint(ckpt, &a.data, a.threshold, &a.out)?
                }
                (None, true) => {
                    let records = crate::dataset::read_dataset(&a.data)?;
                    let t = a
                        .threshold
                        .unwrap_or(deeptopo_core::metrics::DEFAULT_THRESHOLD);
                    commands::evaluate(None, &records, t, &a.out)?
                }
            };
            print!("{}", crate::eval::report_text(&report));
        }
        Command::Gradcheck(a) => {
            if a.seeds == 0 {
                return Err(Error::Usage("--seeds: must be positive".into()));
            }
            let results = commands::gradcheck(a.seeds, a.inject_fault)?;
            print!("{}", commands::gradcheck_report(&results));
            if results.iter().any(|r| !r.passed()) {
                println!("gradient check failed");
                return Ok(EXIT_GRADCHECK);
            }
            println!("gradient check passed");
        }
        Command::SweepLambda(a) => {
            let cfg = a.resolve()?;
            let rows: Vec<Row> = commands::sweep_lambda(&cfg, &SWEEP_GRID, |l, log| {
                epoch_line(&format!("lambda {l}"), log)
            })?;
            print!("{}", commands::sweep_text(&rows));
        }
        Command::Ablate(a) => {
            let cfg = a.resolve()?;
            let rows = commands::ablate(&cfg, epoch_line)?;
            print!("{}", commands::ablation_text(&rows));
        }
    }
    Ok(0)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Diagnostics go to standard error on one line.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let text = e.to_string();
                    let line = text
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("invalid arguments");
                    eprintln!("{line}");
                    EXIT_USAGE
                }
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

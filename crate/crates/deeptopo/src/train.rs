//! Seeded training loop with per-step and per-epoch logs and checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use deeptopo_core::backbone::random_mask;
use deeptopo_core::model::{train_step, Model, StepInput};
use deeptopo_core::optim::{AdamW, AdamWConfig};
use deeptopo_core::Tensor;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::Record;
use crate::error::{Error, Result};

pub const STEPS_LOG: &str = "steps.tsv";
pub const EPOCHS_LOG: &str = "epochs.tsv";
pub const CONFIG_ECHO: &str = "config.txt";
pub const FINAL: &str = "final";
pub const BEST: &str = "best";

/// Example-weighted loss means over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub seg: f64,
    pub rec: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub epochs: Vec<EpochLog>,
    /// Epoch with the lowest mean total loss.
    pub best_epoch: usize,
    pub final_dir: PathBuf,
    pub best_dir: PathBuf,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Checks that every record fits the configured model.
pub fn check_records(cfg: &RunConfig, records: &[Record], what: &str) -> Result<()> {
    if records.is_empty() {
        return Err(Error::usage(format!("the {what} set is empty")));
    }
    if let Some(r) = records.iter().find(|r| r.size() != cfg.model.image_size) {
        return Err(Error::usage(format!(
            "{what} sample {} is {} pixels wide but image_size is {}",
            r.entry.id,
            r.size(),
            cfg.model.image_size
        )));
    }
    Ok(())
}

/// Trains a fresh model on `records`, writing logs and the `final` and
/// `best` checkpoints under `cfg.out_dir`. Epoch `e` visits the examples in
/// the order of stream `2e` and draws reconstruction masks from stream
/// `2e + 1` of a generator keyed by the seed.
pub fn train(
    cfg: &RunConfig,
    records: &[Record],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_records(cfg, records, "training")?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let echo = out.join(CONFIG_ECHO);
    fs::write(&echo, cfg.to_text()).map_err(Error::io(&echo))?;
    let steps_path = out.join(STEPS_LOG);
    let mut steps = BufWriter::new(File::create(&steps_path).map_err(Error::io(&steps_path))?);
    writeln!(steps, "step\tepoch\tl_seg\tl_rec\tl_total").map_err(Error::io(&steps_path))?;
    let epochs_path = out.join(EPOCHS_LOG);
    let mut epochs_file =
        BufWriter::new(File::create(&epochs_path).map_err(Error::io(&epochs_path))?);
    writeln!(epochs_file, "epoch\tl_seg\tl_rec\tl_total").map_err(Error::io(&epochs_path))?;

    let images: Vec<Tensor<f32>> = records.iter().map(|r| r.image.cast()).collect();
    let masks: Vec<Tensor<f32>> = records.iter().map(|r| r.mask_tensor().cast()).collect();
    let mut model = Model::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let opt_cfg = AdamWConfig {
        lr: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(opt_cfg, &model.params)?;
    let (final_dir, best_dir) = (out.join(FINAL), out.join(BEST));
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<EpochLog> = None;
    let total_steps = cfg.epochs * records.len().div_ceil(cfg.batch_size);
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.shuffle(&mut stream(cfg.seed, 2 * epoch as u64));
        let mut plans = stream(cfg.seed, 2 * epoch as u64 + 1);
        let mut sums = EpochLog {
            epoch,
            seg: 0.0,
            rec: 0.0,
            total: 0.0,
        };
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| {
                    Ok(StepInput {
                        image: &images[i],
                        mask: &masks[i],
                        plan: random_mask(
                            cfg.model.tokens(),
                            cfg.model.mask_ratio,
                            plans.next_u64(),
                        )?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            opt.config.lr = cfg.learning_rate * cfg.lr_schedule.factor(step, total_steps);
            let l = train_step(&mut model, &mut opt, &batch, &cfg.loss)?;
            step += 1;
            writeln!(steps, "{step}\t{epoch}\t{}\t{}\t{}", l.seg, l.rec, l.total)
                .map_err(Error::io(&steps_path))?;
            let n = chunk.len() as f64;
            sums.seg += l.seg * n;
            sums.rec += l.rec * n;
            sums.total += l.total * n;
        }
        let n = records.len() as f64;
        let log = EpochLog {
            epoch,
            seg: sums.seg / n,
            rec: sums.rec / n,
            total: sums.total / n,
        };
        writeln!(
            epochs_file,
            "{epoch}\t{}\t{}\t{}",
            log.seg, log.rec, log.total
        )
        .map_err(Error::io(&epochs_path))?;
        if best.is_none_or(|b| log.total < b.total) {
            best = Some(log);
            checkpoint::save(&best_dir, cfg, &model)?;
        }
        on_epoch(&log);
        logs.push(log);
    }
    steps.flush().map_err(Error::io(&steps_path))?;
    epochs_file.flush().map_err(Error::io(&epochs_path))?;
    checkpoint::save(&final_dir, cfg, &model)?;
    Ok(TrainOutcome {
        model,
        epochs: logs,
        best_epoch: best.map_or(0, |b| b.epoch),
        final_dir,
        best_dir,
    })
}

/// One `steps.tsv` row: `(step, epoch, l_seg, l_rec, l_total)`.
pub type StepRow = (usize, usize, f64, f64, f64);

pub fn read_steps(path: &Path) -> Result<Vec<StepRow>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Header {
                path: path.to_path_buf(),
                msg: format!("step line {}: {line:?}", n + 1),
            };
            if f.len() != 5 {
                return Err(bad());
            }
            let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            Ok((
                int(f[0])?,
                int(f[1])?,
                real(f[2])?,
                real(f[3])?,
                real(f[4])?,
            ))
        })
        .collect()
}

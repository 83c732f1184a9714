//! Run configuration: profile defaults, then a flat `key = value` file, then
//! command-line overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use deeptopo_core::backbone::{ModelConfig, Variant};
use deeptopo_core::losses::LossWeights;
use deeptopo_core::metrics::DEFAULT_THRESHOLD;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Toy,
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Toy => "toy",
            Profile::Paper => "paper",
        }
    }

    pub fn parse(s: &str) -> Option<Profile> {
        [Profile::Toy, Profile::Paper]
            .into_iter()
            .find(|p| p.name() == s)
    }

    /// Keys whose value the profile fixes.
    pub fn pinned(self) -> &'static [&'static str] {
        match self {
            Profile::Toy => &[
                "image_size",
                "patch_size",
                "enc_dim",
                "enc_depth",
                "enc_heads",
                "dec_dim",
                "dec_depth",
                "dec_heads",
                "atrm_stages",
            ],
            Profile::Paper => &[
                "image_size",
                "patch_size",
                "enc_dim",
                "enc_depth",
                "enc_heads",
                "dec_dim",
                "dec_depth",
                "dec_heads",
                "mask_ratio",
                "learning_rate",
                "lambda",
            ],
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Learning-rate multiplier over the course of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the initial rate to zero at the last step.
    Cosine,
}

impl LrSchedule {
    pub fn name(self) -> &'static str {
        match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<LrSchedule> {
        [LrSchedule::Constant, LrSchedule::Cosine]
            .into_iter()
            .find(|l| l.name() == s)
    }

    /// Multiplier of the initial rate at `step` (0-based) of `total` steps.
    pub fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total.max(1) as f64).cos())
            }
        }
    }
}

/// Everything a command needs to build, train and evaluate a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    /// Architecture; `model.variant` is the ablation.
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    /// Binarization threshold of the evaluation metrics.
    pub threshold: f64,
    /// Dataset root holding `train/` and `eval/`.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

/// Keys in echo order.
pub const KEYS: [&str; 29] = [
    "profile",
    "ablation",
    "image_size",
    "patch_size",
    "in_channels",
    "enc_dim",
    "enc_depth",
    "enc_heads",
    "dec_dim",
    "dec_depth",
    "dec_heads",
    "mask_ratio",
    "wcap_kernel",
    "wcap_epsilon",
    "bridge_channels",
    "atrm_channels",
    "atrm_kernel",
    "lambda",
    "l",
    "alpha_max",
    "epochs",
    "batch_size",
    "learning_rate",
    "weight_decay",
    "lr_schedule",
    "seed",
    "threshold",
    "data_dir",
    "out_dir",
];

impl RunConfig {
    pub fn defaults(profile: Profile) -> Self {
        let (model, epochs, batch_size, learning_rate) = match profile {
            Profile::Toy => (ModelConfig::toy(), 20, 4, 1e-3),
            Profile::Paper => (ModelConfig::paper(), 100, 8, 5e-5),
        };
        RunConfig {
            profile,
            model,
            loss: LossWeights::default(),
            epochs,
            batch_size,
            learning_rate,
            weight_decay: 0.01,
            lr_schedule: LrSchedule::Constant,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
        }
    }

    /// Current value of `key` in the spelling [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "profile" => self.profile.name().into(),
            "ablation" => m.variant.name().into(),
            "image_size" => m.image_size.to_string(),
            "patch_size" => m.patch_size.to_string(),
            "in_channels" => m.in_channels.to_string(),
            "enc_dim" => m.enc_dim.to_string(),
            "enc_depth" => m.enc_depth.to_string(),
            "enc_heads" => m.enc_heads.to_string(),
            "dec_dim" => m.dec_dim.to_string(),
            "dec_depth" => m.dec_depth.to_string(),
            "dec_heads" => m.dec_heads.to_string(),
            "mask_ratio" => m.mask_ratio.to_string(),
            "wcap_kernel" => m.wcap_kernel.to_string(),
            "wcap_epsilon" => m.wcap_epsilon.to_string(),
            "bridge_channels" => m.bridge_channels.to_string(),
            "atrm_channels" => m
                .atrm_channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "atrm_stages" => m.atrm_channels.len().to_string(),
            "atrm_kernel" => m.atrm_kernel.to_string(),
            "lambda" => self.loss.lambda.to_string(),
            "l" => self.loss.l.to_string(),
            "alpha_max" => self.loss.alpha_max.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "lr_schedule" => self.lr_schedule.name().into(),
            "seed" => self.seed.to_string(),
            "threshold" => self.threshold.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Sets one key. `profile` is handled by [`RunConfig::resolve`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |what: &str| Error::usage(format!("{key} = {v:?}: {what}"));
        let count = || {
            v.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| bad("expected a positive integer"))
        };
        let real = || {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad("expected a finite number"))
        };
        let m = &mut self.model;
        match key {
            "ablation" => {
                m.variant = Variant::parse(v)
                    .ok_or_else(|| bad("expected full, baseline, wcap_only or atrm_only"))?
            }
            "image_size" => m.image_size = count()?,
            "patch_size" => m.patch_size = count()?,
            "in_channels" => {
                if count()? != 3 {
                    return Err(bad("images have 3 channels"));
                }
            }
            "enc_dim" => m.enc_dim = count()?,
            "enc_depth" => m.enc_depth = count()?,
            "enc_heads" => m.enc_heads = count()?,
            "dec_dim" => m.dec_dim = count()?,
            "dec_depth" => m.dec_depth = count()?,
            "dec_heads" => m.dec_heads = count()?,
            "mask_ratio" => m.mask_ratio = real()?,
            "wcap_kernel" => m.wcap_kernel = count()?,
            "wcap_epsilon" => m.wcap_epsilon = real()?,
            "bridge_channels" => m.bridge_channels = count()?,
            "atrm_channels" => {
                m.atrm_channels = v
                    .split(',')
                    .map(|c| c.trim().parse::<usize>().ok().filter(|&n| n > 0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad("expected a comma-separated list of positive integers"))?;
            }
            "atrm_kernel" => m.atrm_kernel = count()?,
            "lambda" => self.loss.lambda = real()?,
            "l" => self.loss.l = real()?,
            "alpha_max" => self.loss.alpha_max = real()?,
            "epochs" => self.epochs = count()?,
            "batch_size" => self.batch_size = count()?,
            "learning_rate" => self.learning_rate = real()?,
            "weight_decay" => self.weight_decay = real()?,
            "lr_schedule" => {
                self.lr_schedule =
                    LrSchedule::parse(v).ok_or_else(|| bad("expected constant or cosine"))?
            }
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| bad("expected a non-negative integer"))?
            }
            "threshold" => self.threshold = real()?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Profile defaults, then `file` pairs, then `overrides`; checks profile
    /// pins and value domains.
    pub fn resolve(file: &[(String, String)], overrides: &[(String, String)]) -> Result<Self> {
        let chosen = overrides
            .iter()
            .rev()
            .chain(file.iter().rev())
            .find(|(k, _)| k == "profile")
            .map(|(_, v)| v.as_str());
        let profile = match chosen {
            Some(p) => Profile::parse(p.trim())
                .ok_or_else(|| Error::usage(format!("profile = {p:?}: expected toy or paper")))?,
            None => Profile::Toy,
        };
        let mut cfg = RunConfig::defaults(profile);
        for (k, v) in file.iter().chain(overrides).filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        cfg.check_pins()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn check_pins(&self) -> Result<()> {
        let base = RunConfig::defaults(self.profile);
        for key in self.profile.pinned() {
            let (got, want) = (self.get(key), base.get(key));
            if got != want {
                return Err(Error::usage(format!(
                    "{key} = {} conflicts with the {} profile, which pins it to {}",
                    got.unwrap_or_default(),
                    self.profile,
                    want.unwrap_or_default()
                )));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| Error::usage(e.to_string()))?;
        self.loss
            .validate()
            .map_err(|e| Error::usage(e.to_string()))?;
        if !(self.learning_rate > 0.0) {
            return Err(Error::usage(format!(
                "learning_rate = {}: must be positive",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::usage(format!(
                "weight_decay = {}: must be non-negative",
                self.weight_decay
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::usage(format!(
                "threshold = {}: must lie in (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Every key with its value, in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    /// The configuration as a file [`parse_pairs`] reads back.
    pub fn to_text(&self) -> String {
        self.pairs()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn train_dir(&self) -> PathBuf {
        self.data_dir.join("train")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.data_dir.join("eval")
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(n, raw)| {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                return None;
            }
            Some(match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    Ok((k.trim().to_string(), v.trim().to_string()))
                }
                _ => Err(Error::usage(format!(
                    "config line {}: expected `key = value`, found {raw:?}",
                    n + 1
                ))),
            })
        })
        .collect()
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_pairs(&text).map_err(|e| Error::usage(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn profiles_match_their_pins() {
        let toy = RunConfig::resolve(&[], &[]).unwrap();
        assert_eq!(toy.model, ModelConfig::toy());
        let paper = RunConfig::resolve(&[], &kv(&[("profile", "paper")])).unwrap();
        assert_eq!(paper.model, ModelConfig::paper());
        assert_eq!((paper.learning_rate, paper.loss.lambda), (5e-5, 0.1));
    }

    #[test]
    fn flags_override_file() {
        let file = parse_pairs("# run\nepochs = 3\nlambda = 0.2 # aux weight\n\nseed=9\n").unwrap();
        let cfg = RunConfig::resolve(&file, &kv(&[("epochs", "5")])).unwrap();
        assert_eq!((cfg.epochs, cfg.loss.lambda, cfg.seed), (5, 0.2, 9));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::resolve(
            &[],
            &kv(&[
                ("lambda", "0.05"),
                ("ablation", "atrm_only"),
                ("seed", "17"),
            ]),
        )
        .unwrap();
        let back = RunConfig::resolve(&parse_pairs(&cfg.to_text()).unwrap(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn conflicts_and_domains_refused() {
        assert!(RunConfig::resolve(&[], &kv(&[("image_size", "64")])).is_err());
        assert!(RunConfig::resolve(&[], &kv(&[("atrm_channels", "32,16")])).is_err());
        assert!(RunConfig::resolve(&[], &kv(&[("profile", "paper"), ("lambda", "0.3")])).is_err());
        assert!(RunConfig::resolve(&[], &kv(&[("lambda", "1.5")])).is_err());
        assert!(RunConfig::resolve(&[], &kv(&[("epochs", "0")])).is_err());
        assert!(RunConfig::resolve(&[], &kv(&[("bogus", "1")])).is_err());
        assert!(RunConfig::resolve(&[], &kv(&[("profile", "huge")])).is_err());
        assert!(parse_pairs("no equals sign").is_err());
    }

    #[test]
    fn cosine_schedule_decays_from_one_to_zero() {
        let c = LrSchedule::Cosine;
        assert_eq!(c.factor(0, 10), 1.0);
        assert!((c.factor(5, 10) - 0.5).abs() < 1e-15);
        assert!(c.factor(10, 10).abs() < 1e-15);
        assert!((1..10).all(|t| c.factor(t, 10) < c.factor(t - 1, 10)));
        assert_eq!(LrSchedule::Constant.factor(7, 10), 1.0);
        assert_eq!(LrSchedule::parse("cosine"), Some(c));
    }
}

//! A configured model with its parameters, and one optimization step over a
//! batch of images.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::atrm;
use crate::backbone::{self, MaskPlan, ModelConfig};
use crate::error::{check_dim, Error, Result};
use crate::losses::{self, LossWeights};
use crate::ops::BatchStats;
use crate::optim::AdamW;
use crate::params::ParamStore;
use crate::{Graph, Scalar, Tensor};

/// Running-statistics momentum of batch normalization.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized parameters drawn from a stream seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        backbone::init_model(&mut params, &config, &mut rng)?;
        Ok(Model { config, params })
    }

    /// Foreground probabilities `H×W` in evaluation mode.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::eval();
        let p = self.params.bind(&mut g);
        let x = g.constant(image.clone());
        let logits = backbone::seg_forward(&mut g, &p, &self.config, x, None)?;
        let s = self.config.image_size;
        let probs = g.value(logits).map(crate::ops::sigmoid_scalar);
        probs.reshape(&[s, s])
    }
}

/// One training example as seen by a step.
pub struct StepInput<'a, T> {
    /// `C×H×W`.
    pub image: &'a Tensor<T>,
    /// Binary `H×W`.
    pub mask: &'a Tensor<T>,
    pub plan: MaskPlan,
}

/// Batch-mean loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLosses {
    pub seg: f64,
    pub rec: f64,
    pub total: f64,
}

/// Loss values, parameter gradients and normalization statistics of one
/// example.
pub type ExampleGradients<T> = (StepLosses, Vec<Tensor<T>>, Vec<(String, BatchStats<T>)>);

/// Forward, backward and loss values of one example, without updating.
pub fn example_gradients<T: Scalar>(
    model: &Model<T>,
    input: &StepInput<'_, T>,
    weights: &LossWeights,
) -> Result<ExampleGradients<T>> {
    let cfg = &model.config;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let x = g.constant(input.image.clone());
    let out = backbone::forward(&mut g, &p, cfg, x, &input.plan, true)?;
    let recon = out.recon.expect("reconstruction requested");
    let l_rec = losses::recon_loss(&mut g, recon, input.image, &input.plan, cfg.patch_size)?;
    let wm = losses::dynamic_weight(input.mask, weights)?;
    let seg = losses::seg_loss(&mut g, out.logits, input.mask, &wm)?;
    let total = losses::total_loss_var(&mut g, seg.total, l_rec, T::of(weights.lambda))?;
    let values = StepLosses {
        seg: g.value(seg.total).data()[0].to_f64_lossy(),
        rec: g.value(l_rec).data()[0].to_f64_lossy(),
        total: g.value(total).data()[0].to_f64_lossy(),
    };
    if !values.total.is_finite() {
        return Err(Error::NonFinite { op: "train_step" });
    }
    g.backward(total)?;
    let grads = p.grads(&g);
    Ok((values, grads, p.take_stats()))
}

/// Averages per-example gradients over the batch, applies one optimizer
/// update, re-applies the directional support masks and folds the
/// batch-averaged normalization statistics into the running buffers.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    opt: &mut AdamW<T>,
    batch: &[StepInput<'_, T>],
    weights: &LossWeights,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(Error::invalid("train_step", "empty batch"));
    }
    let inv = T::one() / T::of(batch.len() as f64);
    let mut sum_grads: Option<Vec<Tensor<T>>> = None;
    let mut stats: Vec<(String, BatchStats<T>)> = Vec::new();
    let mut losses = StepLosses::default();
    for input in batch {
        let (l, grads, s) = example_gradients(model, input, weights)?;
        losses.seg += l.seg;
        losses.rec += l.rec;
        losses.total += l.total;
        match &mut sum_grads {
            None => sum_grads = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(x, &y)| *x = *x + y);
                }
            }
        }
        if stats.is_empty() {
            stats = s;
        } else {
            check_dim("train_step", "normalization layers", stats.len(), s.len())?;
            for ((_, acc), (_, st)) in stats.iter_mut().zip(&s) {
                acc.accumulate(st);
            }
        }
    }
    let mut grads = sum_grads.expect("non-empty batch");
    grads
        .iter_mut()
        .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v = *v * inv));
    opt.step(&mut model.params, &grads)?;
    atrm::enforce_support_masks(&mut model.params, "atrm", &model.config.atrm_config())?;
    stats.iter_mut().for_each(|(_, s)| s.scale(inv));
    model.params.apply_batch_stats(&stats, T::of(BN_MOMENTUM))?;
    let n = batch.len() as f64;
    Ok(StepLosses {
        seg: losses.seg / n,
        rec: losses.rec / n,
        total: losses.total / n,
    })
}

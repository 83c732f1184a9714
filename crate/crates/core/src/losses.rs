//! Multi-task objective.
//!
//! * Reconstruction: mean squared error over the pixels of masked patches.
//! * Segmentation: weighted binary cross-entropy (stable logits form) plus a
//!   weighted soft-IoU term, both normalized by the weight map. Foreground
//!   pixels carry `clamp(l·S_img/S_obj, 1, α_max)`, background pixels 1.
//! * Total: `λ·L_rec + (1−λ)·L_seg`.

use alloc::format;
use alloc::vec::Vec;

use crate::backbone::MaskPlan;
use crate::error::{check_dim, Error, Result};
use crate::{Graph, Scalar, Tensor, Var};

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    /// Area-scaling constant of the object weight.
    pub l: f64,
    pub alpha_max: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 0.1,
            l: 1.0,
            alpha_max: 20.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(
                "loss_weights",
                format!("lambda {} outside [0, 1]", self.lambda),
            ));
        }
        if !(self.l > 0.0) {
            return Err(Error::invalid(
                "loss_weights",
                format!("l {} must be positive", self.l),
            ));
        }
        if !(self.alpha_max >= 1.0) {
            return Err(Error::invalid(
                "loss_weights",
                format!("alpha_max {} must be at least 1", self.alpha_max),
            ));
        }
        Ok(())
    }
}

/// Per-pixel weights of the segmentation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap<T> {
    /// `H×W`.
    pub weights: Tensor<T>,
    /// Pre-clamp object weight; `None` when the mask is empty.
    pub alpha: Option<f64>,
}

/// `l·S_img/S_obj`, undefined for an empty object.
pub fn object_weight(s_img: usize, s_obj: usize, l: f64) -> Option<f64> {
    (s_obj > 0).then(|| l * s_img as f64 / s_obj as f64)
}

/// Weight map of a binary `H×W` (or `1×H×W`) ground truth.
pub fn dynamic_weight<T: Scalar>(gt: &Tensor<T>, weights: &LossWeights) -> Result<WeightMap<T>> {
    weights.validate()?;
    if gt.data().iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::invalid(
            "dynamic_weight",
            "ground-truth mask is not binary",
        ));
    }
    let s_obj = gt.data().iter().filter(|&&v| v == T::one()).count();
    let alpha = object_weight(gt.numel(), s_obj, weights.l);
    let fg = T::of(alpha.map_or(1.0, |a| a.clamp(1.0, weights.alpha_max)));
    let w = gt.map(|v| if v == T::one() { fg } else { T::one() });
    Ok(WeightMap { weights: w, alpha })
}

/// Mean squared error of `recon` against `target` over pixels of masked
/// patches only; zero (with zero gradient) when nothing is masked.
pub fn recon_loss<T: Scalar>(
    g: &mut Graph<T>,
    recon: Var,
    target: &Tensor<T>,
    plan: &MaskPlan,
    patch: usize,
) -> Result<Var> {
    let shape = target.shape().to_vec();
    check_dim(
        "recon_loss",
        "element count",
        target.numel(),
        g.value(recon).numel(),
    )?;
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let grid_w = w / patch;
    let mut selector = Tensor::zeros(&shape);
    let count = plan.masked.len() * c * patch * patch;
    if count > 0 {
        let inv = T::one() / T::of(count as f64);
        for &t in &plan.masked {
            let (ty, tx) = (t / grid_w, t % grid_w);
            for ch in 0..c {
                for dy in 0..patch {
                    for dx in 0..patch {
                        selector.data_mut()[ch * h * w + (ty * patch + dy) * w + tx * patch + dx] =
                            inv;
                    }
                }
            }
        }
    }
    let t = g.constant(target.clone());
    let diff = g.sub(recon, t)?;
    let sq = g.mul(diff, diff)?;
    g.weighted_sum(sq, &selector)
}

/// Handles of the two segmentation terms and their sum.
#[derive(Debug, Clone, Copy)]
pub struct SegLoss {
    pub bce: Var,
    pub iou: Var,
    pub total: Var,
}

/// `Σ W·bce / Σ W + 1 − Σ W·p·g / Σ W·(p + g − p·g)` with `p = σ(logits)` and
/// `bce = softplus(x) − x·g`.
pub fn seg_loss<T: Scalar>(
    g: &mut Graph<T>,
    logits: Var,
    gt: &Tensor<T>,
    wm: &WeightMap<T>,
) -> Result<SegLoss> {
    let n = gt.numel();
    check_dim("seg_loss", "element count", n, g.value(logits).numel())?;
    check_dim("seg_loss", "weight count", n, wm.weights.numel())?;
    let (gv, wv) = (gt.data(), wm.weights.data());
    let w_total = wv.iter().fold(T::zero(), |a, &b| a + b);
    let norm = |f: &dyn Fn(usize) -> T| -> Tensor<T> { Tensor::from_fn(g.shape(logits), f) };
    let sp_w = norm(&|i| wv[i] / w_total);
    let xy_w = norm(&|i| wv[i] * gv[i] / w_total);
    let inter_w = norm(&|i| wv[i] * gv[i]);
    let union_w = norm(&|i| wv[i] * (T::one() - gv[i]));
    let wg: T = (0..n).fold(T::zero(), |a, i| a + wv[i] * gv[i]);

    let sp = g.softplus(logits);
    let a = g.weighted_sum(sp, &sp_w)?;
    let b = g.weighted_sum(logits, &xy_w)?;
    let bce = g.sub(a, b)?;

    let p = g.sigmoid(logits);
    let inter = g.weighted_sum(p, &inter_w)?;
    let union = g.weighted_sum(p, &union_w)?;
    let union = g.add_scalar(union, wg);
    let ratio = g.div(inter, union)?;
    let neg = g.scale(ratio, -T::one());
    let iou = g.add_scalar(neg, T::one());
    let total = g.add(bce, iou)?;
    Ok(SegLoss { bce, iou, total })
}

/// `λ·l_rec + (1−λ)·l_seg`.
pub fn total_loss<T: Scalar>(l_seg: T, l_rec: T, lambda: T) -> Result<T> {
    check_lambda(lambda.to_f64_lossy())?;
    Ok(lambda * l_rec + (T::one() - lambda) * l_seg)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(
            "total_loss",
            format!("lambda {lambda} outside [0, 1]"),
        ));
    }
    Ok(())
}

/// Graph form of [`total_loss`].
pub fn total_loss_var<T: Scalar>(
    g: &mut Graph<T>,
    l_seg: Var,
    l_rec: Var,
    lambda: T,
) -> Result<Var> {
    check_lambda(lambda.to_f64_lossy())?;
    let r = g.scale(l_rec, lambda);
    let s = g.scale(l_seg, T::one() - lambda);
    g.add(r, s)
}

/// Pixel indices covered by the masked patches of a plan (row-major over a
/// single `H×W` plane).
pub fn masked_pixels(plan: &MaskPlan, side: usize, patch: usize) -> Vec<usize> {
    let grid = side / patch;
    let mut out = Vec::with_capacity(plan.masked.len() * patch * patch);
    for &t in &plan.masked {
        let (ty, tx) = (t / grid, t % grid);
        for dy in 0..patch {
            for dx in 0..patch {
                out.push((ty * patch + dy) * side + tx * patch + dx);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn endpoints() {
        assert_eq!(total_loss(1.0f64, 2.0, 0.0).unwrap(), 1.0);
        assert_eq!(total_loss(1.0f64, 2.0, 1.0).unwrap(), 2.0);
        assert!((total_loss(1.0f64, 2.0, 0.1).unwrap() - 1.1).abs() < 1e-15);
        assert!(total_loss(1.0f64, 2.0, 1.5).is_err());
    }

    #[test]
    fn full_coverage_weight() {
        let gt = Tensor::<f64>::ones(&[4, 4]);
        let wm = dynamic_weight(&gt, &LossWeights::default()).unwrap();
        assert_eq!(wm.alpha, Some(1.0));
        assert!(wm.weights.data().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn quarter_coverage_weight() {
        let gt = Tensor::<f64>::from_fn(&[384, 384], |i| {
            if i / 384 < 192 && i % 384 < 192 {
                1.0
            } else {
                0.0
            }
        });
        let wm = dynamic_weight(&gt, &LossWeights::default()).unwrap();
        assert_eq!(wm.alpha, Some(4.0));
    }

    #[test]
    fn empty_mask_has_unit_weights() {
        let gt = Tensor::<f64>::zeros(&[3, 3]);
        let wm = dynamic_weight(&gt, &LossWeights::default()).unwrap();
        assert_eq!(wm.alpha, None);
        assert!(wm.weights.data().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn non_binary_mask_rejected() {
        let gt = Tensor::new(&[2], vec![0.0, 0.5]).unwrap();
        assert!(dynamic_weight(&gt, &LossWeights::default()).is_err());
    }

    #[test]
    fn hand_summed_recon() {
        // a 1×2×4 image in 2×2 patches; the first patch is masked
        let plan = MaskPlan {
            visible: vec![1],
            masked: vec![0],
            seed: 0,
        };
        let target = Tensor::<f64>::zeros(&[1, 2, 4]);
        let mut g = Graph::new();
        let rec = g
            .param(Tensor::new(&[1, 2, 4], vec![1.0, -1.0, 9.0, 9.0, 2.0, 0.0, 9.0, 9.0]).unwrap());
        let l = recon_loss(&mut g, rec, &target, &plan, 2).unwrap();
        assert_eq!(g.value(l).data()[0], 1.5);
    }
}

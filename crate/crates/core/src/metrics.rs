//! Segmentation quality metrics and topology diagnostics.
//!
//! Predictions are `H×W` probability maps in `[0, 1]`, ground truths binary
//! `H×W` maps. Constants follow the usual salient-object-detection
//! definitions:
//!
//! * S-measure: `0.5·S_object + 0.5·S_region`; the region term splits the
//!   image at the foreground centroid (rounded half-to-even, plus one) and
//!   weighs each quadrant's SSIM by its pixel count. An all-background ground
//!   truth scores `1 − mean(pred)`, an all-foreground one `mean(pred)`.
//! * Weighted F: distance-weighted errors with a 7×7 Gaussian (σ = 5,
//!   normalized, zero boundary) and β² = 1; an all-background ground truth
//!   scores 0. Background errors are taken from the nearest foreground pixel
//!   (smallest squared distance, ties to the smaller column, then row).
//! * Mean E-measure: the enhanced-alignment score averaged over 256
//!   thresholds at the bin centers `(k + 0.5)/256`, binarizing `pred ≥ t`,
//!   each score normalized by the pixel count.
//!
//! Divisions are guarded only where a denominator can be zero, so a perfect
//! prediction scores exactly 1. Connectivity is 8-connected everywhere.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{check_dim, Error, Result};

/// Default binarization threshold of predictions.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Number of E-measure thresholds.
pub const E_THRESHOLDS: usize = 256;

/// A binary `H×W` mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize, data: Vec<bool>) -> Result<Self> {
        check_dim("binary_mask", "element count", h * w, data.len())?;
        Ok(BinaryMask { h, w, data })
    }

    pub fn empty(h: usize, w: usize) -> Self {
        BinaryMask {
            h,
            w,
            data: vec![false; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        BinaryMask {
            h,
            w,
            data: (0..h * w).map(|i| f(i / w, i % w)).collect(),
        }
    }

    /// `values ≥ threshold`.
    pub fn threshold(h: usize, w: usize, values: &[f64], threshold: f64) -> Result<Self> {
        BinaryMask::new(h, w, values.iter().map(|&v| v >= threshold).collect())
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.w + c]
    }

    /// Out-of-range reads are background.
    pub fn get_signed(&self, r: isize, c: isize) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < self.h
            && (c as usize) < self.w
            && self.get(r as usize, c as usize)
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.w + c] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// `1.0` for foreground, `0.0` for background.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

fn check_pair(op: &'static str, pred: &[f64], gt: &BinaryMask) -> Result<()> {
    check_dim(op, "pixel count", gt.data.len(), pred.len())?;
    if pred.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(op, "prediction outside [0, 1]"));
    }
    Ok(())
}

fn mean(x: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Mean absolute error.
pub fn mae(pred: &[f64], gt: &BinaryMask) -> Result<f64> {
    check_pair("mae", pred, gt)?;
    Ok(mean(
        pred.iter()
            .zip(&gt.data)
            .map(|(&p, &g)| (p - if g { 1.0 } else { 0.0 }).abs()),
    ))
}

/// IoU of `pred ≥ threshold` with the ground truth; 1 when both are empty.
pub fn miou(pred: &[f64], gt: &BinaryMask, threshold: f64) -> Result<f64> {
    check_pair("miou", pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(&gt.data) {
        let p = p >= threshold;
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

fn s_object(values: &[f64]) -> f64 {
    let n = values.len();
    let m = mean(values.iter().copied());
    let std = if n > 1 {
        (values.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    2.0 * m / (m * m + 1.0 + std)
}

fn ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    let x = mean(pred.iter().copied());
    let y = mean(gt.iter().copied());
    let dof = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt) {
        sx += (p - x) * (p - x);
        sy += (g - y) * (g - y);
        sxy += (p - x) * (g - y);
    }
    let (sx, sy, sxy) = (sx / dof, sy / dof, sxy / dof);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / beta
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn round_half_even(v: f64) -> f64 {
    let r = Float::round(v);
    if (v - Float::trunc(v)).abs() == 0.5 && r % 2.0 != 0.0 {
        r - v.signum()
    } else {
        r
    }
}

/// Structure measure with blend weight 0.5.
pub fn s_measure(pred: &[f64], gt: &BinaryMask) -> Result<f64> {
    check_pair("s_measure", pred, gt)?;
    let (h, w) = (gt.h, gt.w);
    let n = h * w;
    let fg = gt.count();
    if fg == 0 {
        return Ok(1.0 - mean(pred.iter().copied()));
    }
    if fg == n {
        return Ok(mean(pred.iter().copied()));
    }
    let fg_vals: Vec<f64> = pred
        .iter()
        .zip(&gt.data)
        .filter(|(_, &g)| g)
        .map(|(&p, _)| p)
        .collect();
    let bg_vals: Vec<f64> = pred
        .iter()
        .zip(&gt.data)
        .filter(|(_, &g)| !g)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    let object = (fg as f64 * s_object(&fg_vals) + (n - fg) as f64 * s_object(&bg_vals)) / n as f64;

    let (mut sr, mut sc) = (0.0, 0.0);
    for i in 0..n {
        if gt.data[i] {
            sr += (i / w) as f64;
            sc += (i % w) as f64;
        }
    }
    let cy = round_half_even(sr / fg as f64) as usize + 1;
    let cx = round_half_even(sc / fg as f64) as usize + 1;
    let gtf = gt.to_f64();
    let mut region = 0.0;
    for (r0, r1) in [(0, cy), (cy, h)] {
        for (c0, c1) in [(0, cx), (cx, w)] {
            let count = (r1 - r0) * (c1 - c0);
            if count == 0 {
                continue;
            }
            let mut p = Vec::with_capacity(count);
            let mut g = Vec::with_capacity(count);
            for r in r0..r1 {
                p.extend_from_slice(&pred[r * w + c0..r * w + c1]);
                g.extend_from_slice(&gtf[r * w + c0..r * w + c1]);
            }
            region += count as f64 * ssim(&p, &g);
        }
    }
    let region = region / n as f64;
    Ok((0.5 * object + 0.5 * region).max(0.0))
}

/// Enhanced-alignment score of one binarization.
fn e_score(pred_fg: &[bool], gt: &BinaryMask) -> f64 {
    let n = gt.data.len();
    let g_fg = gt.count();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&p, &g) in pred_fg.iter().zip(&gt.data) {
        tp += (p && g) as usize;
        fp += (p && !g) as usize;
    }
    let p_fg = tp + fp;
    let p_bg = n - p_fg;
    let sum = if g_fg == 0 {
        p_bg as f64
    } else if g_fg == n {
        p_fg as f64
    } else {
        let fn_ = g_fg - tp;
        let tn = p_bg - fn_;
        let mp = p_fg as f64 / n as f64;
        let mg = g_fg as f64 / n as f64;
        let parts = [
            (tp, 1.0 - mp, 1.0 - mg),
            (fp, 1.0 - mp, -mg),
            (fn_, -mp, 1.0 - mg),
            (tn, -mp, -mg),
        ];
        parts
            .iter()
            .map(|&(count, a, b)| {
                let denom = a * a + b * b;
                let align = if denom == 0.0 {
                    0.0
                } else {
                    2.0 * a * b / denom
                };
                (align + 1.0) * (align + 1.0) / 4.0 * count as f64
            })
            .sum()
    };
    sum / n as f64
}

/// Threshold of the `k`-th E-measure binarization.
pub fn e_threshold(k: usize) -> f64 {
    (k as f64 + 0.5) / E_THRESHOLDS as f64
}

/// E-measure at each of the 256 thresholds.
pub fn e_curve(pred: &[f64], gt: &BinaryMask) -> Result<Vec<f64>> {
    check_pair("mean_e", pred, gt)?;
    let mut bin = vec![false; pred.len()];
    Ok((0..E_THRESHOLDS)
        .map(|k| {
            let t = e_threshold(k);
            bin.iter_mut().zip(pred).for_each(|(b, &p)| *b = p >= t);
            e_score(&bin, gt)
        })
        .collect())
}

/// Mean E-measure over 256 thresholds.
pub fn mean_e(pred: &[f64], gt: &BinaryMask) -> Result<f64> {
    Ok(mean(e_curve(pred, gt)?.into_iter()))
}

/// Exact Euclidean distance to, and index of, the nearest foreground pixel.
/// Ties go to the smaller column, then the smaller row.
pub fn nearest_foreground(mask: &BinaryMask) -> Vec<Option<(f64, usize)>> {
    let (h, w) = (mask.h, mask.w);
    // nearest foreground row in each column, per row
    let mut vert: Vec<Option<usize>> = vec![None; h * w];
    for c in 0..w {
        let mut last: Option<usize> = None;
        for r in 0..h {
            if mask.get(r, c) {
                last = Some(r);
            }
            vert[r * w + c] = last;
        }
        let mut next: Option<usize> = None;
        for r in (0..h).rev() {
            if mask.get(r, c) {
                next = Some(r);
            }
            let up = vert[r * w + c];
            vert[r * w + c] = match (up, next) {
                (Some(u), Some(d)) => Some(if r - u <= d - r { u } else { d }),
                (u, d) => u.or(d),
            };
        }
    }
    let mut out = vec![None; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut best: Option<(usize, usize)> = None;
            for c2 in 0..w {
                if let Some(r2) = vert[r * w + c2] {
                    let d2 = (r.abs_diff(r2)).pow(2) + (c.abs_diff(c2)).pow(2);
                    if best.is_none_or(|(b, _)| d2 < b) {
                        best = Some((d2, r2 * w + c2));
                    }
                }
            }
            out[r * w + c] = best.map(|(d2, i)| ((d2 as f64).sqrt(), i));
        }
    }
    out
}

/// The normalized 7×7 Gaussian (σ = 5) of the weighted F-measure, with
/// entries below `ε·max` zeroed before normalization.
pub fn gaussian_kernel_7x7() -> [f64; 49] {
    let mut k = [0.0; 49];
    for (i, v) in k.iter_mut().enumerate() {
        let (y, x) = ((i / 7) as f64 - 3.0, (i % 7) as f64 - 3.0);
        *v = Float::exp(-(x * x + y * y) / 50.0);
    }
    let max = k.iter().cloned().fold(0.0, f64::max);
    k.iter_mut()
        .filter(|v| **v < f64::EPSILON * max)
        .for_each(|v| *v = 0.0);
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Weighted F-measure with β² = 1.
pub fn weighted_f(pred: &[f64], gt: &BinaryMask) -> Result<f64> {
    check_pair("weighted_f", pred, gt)?;
    let (h, w) = (gt.h, gt.w);
    let fg = gt.count();
    if fg == 0 {
        return Ok(0.0);
    }
    let gtf = gt.to_f64();
    let e: Vec<f64> = pred
        .iter()
        .zip(&gtf)
        .map(|(&p, &g)| (p - g).abs())
        .collect();
    let nearest = nearest_foreground(gt);
    let et: Vec<f64> = (0..h * w)
        .map(|i| {
            if gt.data[i] {
                e[i]
            } else {
                e[nearest[i].expect("foreground exists").1]
            }
        })
        .collect();
    let k = gaussian_kernel_7x7();
    let mut ea = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for u in 0..7 {
                let rr = r as isize + u as isize - 3;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for v in 0..7 {
                    let cc = c as isize + v as isize - 3;
                    if cc >= 0 && cc < w as isize {
                        acc += k[u * 7 + v] * et[rr as usize * w + cc as usize];
                    }
                }
            }
            ea[r * w + c] = acc;
        }
    }
    let decay = Float::ln(0.5) / 5.0;
    let (mut tp_err, mut fp_err) = (0.0, 0.0);
    for i in 0..h * w {
        let m = if gt.data[i] && ea[i] < e[i] {
            ea[i]
        } else {
            e[i]
        };
        if gt.data[i] {
            tp_err += m;
        } else {
            let b = 2.0 - Float::exp(decay * nearest[i].expect("foreground exists").0);
            fp_err += m * b;
        }
    }
    let tpw = fg as f64 - tp_err;
    let recall = 1.0 - tp_err / fg as f64;
    let precision = if tpw + fp_err == 0.0 {
        0.0
    } else {
        tpw / (tpw + fp_err)
    };
    let denom = recall + precision;
    Ok(if denom == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / denom
    })
}

const N8: [(isize, isize); 8] = [
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Labels of the 8-connected foreground components (0 = background) and
/// their count. Labels follow raster order of each component's first pixel.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (h, w) = (mask.h, mask.w);
    let mut labels = vec![0u32; h * w];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count as u32;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for (dy, dx) in N8 {
                let (rr, cc) = (r + dy, c + dx);
                if mask.get_signed(rr, cc) {
                    let j = rr as usize * w + cc as usize;
                    if labels[j] == 0 {
                        labels[j] = count as u32;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, count)
}

/// Number of 8-connected foreground components.
pub fn components(mask: &BinaryMask) -> usize {
    label_components(mask).1
}

/// Components of `pred` minus components of `gt`.
pub fn cc_delta(pred: &BinaryMask, gt: &BinaryMask) -> i64 {
    components(pred) as i64 - components(gt) as i64
}

/// Fraction of skeleton pixels covered by `pred`; 1 for an empty skeleton.
pub fn skeleton_recall(pred: &BinaryMask, skeleton: &BinaryMask) -> f64 {
    let total = skeleton.count();
    if total == 0 {
        return 1.0;
    }
    let hit = pred
        .data
        .iter()
        .zip(&skeleton.data)
        .filter(|(&p, &s)| p && s)
        .count();
    hit as f64 / total as f64
}

/// Neighbors `P2..P9` (north, then clockwise) of a pixel.
fn neighborhood(m: &BinaryMask, r: usize, c: usize) -> [bool; 8] {
    const ORDER: [(isize, isize); 8] = [
        (-1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
        (1, 0),
        (1, -1),
        (0, -1),
        (-1, -1),
    ];
    let (r, c) = (r as isize, c as isize);
    ORDER.map(|(dy, dx)| m.get_signed(r + dy, c + dx))
}

/// Yokoi connectivity number for 8-connectivity; a foreground pixel whose
/// number is 1 can be removed without changing the topology.
fn crossing_number(p: &[bool; 8]) -> usize {
    // x1..x8 counter-clockwise from east
    let x = [p[2], p[1], p[0], p[7], p[6], p[5], p[4], p[3]];
    let nb = |i: usize| !x[i % 8];
    [0, 2, 4, 6]
        .iter()
        .filter(|&&k| nb(k) && !(nb(k) && nb(k + 1) && nb(k + 2)))
        .count()
}

/// Zhang–Suen thinning in which every candidate is re-checked, in raster
/// order, for being a simple non-end point before it is removed. The result
/// is a subset of the input with the same 8-connected components.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut m = mask.clone();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut candidates = Vec::new();
            for r in 0..m.h {
                for c in 0..m.w {
                    if !m.get(r, c) {
                        continue;
                    }
                    let p = neighborhood(&m, r, c);
                    let b = p.iter().filter(|&&v| v).count();
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let cond = if pass == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if (2..=6).contains(&b) && a == 1 && cond {
                        candidates.push((r, c));
                    }
                }
            }
            for (r, c) in candidates {
                let p = neighborhood(&m, r, c);
                let b = p.iter().filter(|&&v| v).count();
                if b >= 2 && crossing_number(&p) == 1 {
                    m.set(r, c, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return m;
        }
    }
}

/// Metric values of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub s_alpha: f64,
    pub f_beta_w: f64,
    pub mean_e: f64,
    pub mae: f64,
    pub iou: f64,
    pub skeleton_recall: f64,
    pub cc_delta: i64,
}

/// Every metric of one prediction.
pub fn evaluate_image(
    id: &str,
    pred: &[f64],
    gt: &BinaryMask,
    skeleton: &BinaryMask,
    threshold: f64,
) -> Result<ImageRecord> {
    let bin = BinaryMask::threshold(gt.h, gt.w, pred, threshold)?;
    check_dim(
        "evaluate_image",
        "skeleton pixel count",
        gt.data.len(),
        skeleton.data.len(),
    )?;
    Ok(ImageRecord {
        id: id.into(),
        s_alpha: s_measure(pred, gt)?,
        f_beta_w: weighted_f(pred, gt)?,
        mean_e: mean_e(pred, gt)?,
        mae: mae(pred, gt)?,
        iou: miou(pred, gt, threshold)?,
        skeleton_recall: skeleton_recall(&bin, skeleton),
        cc_delta: cc_delta(&bin, gt),
    })
}

/// Arithmetic means over images (`cc_delta` averaged as a real number).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Aggregate {
    pub s_alpha: f64,
    pub f_beta_w: f64,
    pub mean_e: f64,
    pub mae: f64,
    pub iou: f64,
    pub skeleton_recall: f64,
    pub cc_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub records: Vec<ImageRecord>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn new(records: Vec<ImageRecord>) -> Self {
        let n = records.len().max(1) as f64;
        let sum = |f: &dyn Fn(&ImageRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let aggregate = Aggregate {
            s_alpha: sum(&|r| r.s_alpha),
            f_beta_w: sum(&|r| r.f_beta_w),
            mean_e: sum(&|r| r.mean_e),
            mae: sum(&|r| r.mae),
            iou: sum(&|r| r.iou),
            skeleton_recall: sum(&|r| r.skeleton_recall),
            cc_delta: sum(&|r| r.cc_delta as f64),
        };
        EvalReport { records, aggregate }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize, lo: usize, hi: usize) -> BinaryMask {
        BinaryMask::from_fn(n, n, |r, c| (lo..hi).contains(&r) && (lo..hi).contains(&c))
    }

    #[test]
    fn perfect_scores() {
        let gt = square(8, 2, 5);
        let p = gt.to_f64();
        assert_eq!(s_measure(&p, &gt).unwrap(), 1.0);
        assert_eq!(weighted_f(&p, &gt).unwrap(), 1.0);
        assert_eq!(mean_e(&p, &gt).unwrap(), 1.0);
        assert_eq!(mae(&p, &gt).unwrap(), 0.0);
        assert_eq!(miou(&p, &gt, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_fallbacks() {
        let gt = BinaryMask::empty(4, 4);
        let zeros = vec![0.0; 16];
        assert_eq!(s_measure(&zeros, &gt).unwrap(), 1.0);
        assert_eq!(weighted_f(&zeros, &gt).unwrap(), 0.0);
        assert_eq!(mean_e(&zeros, &gt).unwrap(), 1.0);
        assert_eq!(miou(&zeros, &gt, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn total_miss() {
        let gt = square(6, 1, 4);
        let zeros = vec![0.0; 36];
        // border errors are smoothed below 1, so a blank prediction keeps some credit
        assert!((weighted_f(&zeros, &gt).unwrap() - 0.4868951531700607).abs() < 1e-12);
        let inv: Vec<f64> = gt.to_f64().iter().map(|v| 1.0 - v).collect();
        assert_eq!(mae(&inv, &gt).unwrap(), 1.0);
        assert_eq!(miou(&inv, &gt, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn range_violation_rejected() {
        let gt = BinaryMask::empty(1, 2);
        assert!(mae(&[0.0, 1.5], &gt).is_err());
        assert!(mae(&[0.0], &gt).is_err());
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(round_half_even(2.5), 2.0);
        assert_eq!(round_half_even(3.5), 4.0);
        assert_eq!(round_half_even(2.4), 2.0);
        assert_eq!(round_half_even(0.5), 0.0);
    }

    #[test]
    fn thin_line_unchanged() {
        let line = BinaryMask::from_fn(7, 9, |r, c| r == 3 && (1..8).contains(&c));
        assert_eq!(skeletonize(&line), line);
        let diag = BinaryMask::from_fn(7, 7, |r, c| r == c && (1..6).contains(&r));
        assert_eq!(skeletonize(&diag), diag);
    }

    #[test]
    fn filled_square_thins_to_connected_core() {
        let sq = square(9, 2, 7);
        let sk = skeletonize(&sq);
        assert!(sk.is_subset_of(&sq));
        assert_eq!(components(&sk), 1);
        assert!(sk.get(4, 4));
        assert!(sk.count() < sq.count());
    }

    #[test]
    fn two_by_two_block_survives() {
        let sq = square(4, 1, 3);
        let sk = skeletonize(&sq);
        assert_eq!(components(&sk), 1);
    }

    #[test]
    fn component_counts() {
        let m = BinaryMask::from_fn(3, 3, |r, c| (r + c) % 2 == 0);
        assert_eq!(components(&m), 1);
        let split = BinaryMask::from_fn(3, 5, |_, c| c == 0 || c == 4);
        let joined = BinaryMask::from_fn(3, 5, |r, _| r == 1);
        assert_eq!(cc_delta(&split, &joined), 1);
    }

    #[test]
    fn nearest_foreground_tie_break() {
        let m = BinaryMask::from_fn(3, 3, |r, c| (r, c) == (0, 1) || (r, c) == (1, 0));
        let n = nearest_foreground(&m);
        // (1, 1) is at distance 1 from both; the smaller column wins
        assert_eq!(n[4], Some((1.0, 3)));
        assert_eq!(n[1], Some((0.0, 1)));
    }
}

use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Result};
use crate::{Graph, Scalar, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-6;
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Per-channel statistics observed by a training-mode batch normalization,
/// for folding into the running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance.
    pub var: Vec<T>,
}

impl<T: Scalar> BatchStats<T> {
    /// Adds another observation elementwise (for batch averaging).
    pub fn accumulate(&mut self, other: &BatchStats<T>) {
        self.mean
            .iter_mut()
            .zip(&other.mean)
            .for_each(|(a, &b)| *a = *a + b);
        self.var
            .iter_mut()
            .zip(&other.var)
            .for_each(|(a, &b)| *a = *a + b);
    }

    pub fn scale(&mut self, c: T) {
        self.mean
            .iter_mut()
            .chain(self.var.iter_mut())
            .for_each(|v| *v = *v * c);
    }

    /// `running ← (1 − momentum)·running + momentum·observed`.
    pub fn fold_into(&self, running_mean: &mut [T], running_var: &mut [T], momentum: T) {
        let keep = T::one() - momentum;
        for (r, &m) in running_mean.iter_mut().zip(&self.mean) {
            *r = keep * *r + momentum * m;
        }
        for (r, &v) in running_var.iter_mut().zip(&self.var) {
            *r = keep * *r + momentum * v;
        }
    }
}

/// Normalizes each of `groups` contiguous blocks of `len` values. Returns the
/// normalized values, the per-group reciprocal std and means/biased variances.
fn normalize_groups<T: Scalar>(x: &[T], len: usize, eps: T) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
    let inv_n = T::one() / T::of(len as f64);
    let mut xhat = Vec::with_capacity(x.len());
    let (mut rstd, mut means, mut vars) = (Vec::new(), Vec::new(), Vec::new());
    for grp in x.chunks(len) {
        let mean = grp.iter().fold(T::zero(), |a, &v| a + v) * inv_n;
        let var = grp
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            * inv_n;
        let r = T::one() / (var + eps).sqrt();
        xhat.extend(grp.iter().map(|&v| (v - mean) * r));
        rstd.push(r);
        means.push(mean);
        vars.push(var);
    }
    (xhat, rstd, means, vars)
}

/// Input gradient of a group normalization given `d xhat`.
fn normalize_backward<T: Scalar>(dxhat: &[T], xhat: &[T], rstd: &[T], len: usize) -> Vec<T> {
    let n = T::of(len as f64);
    let mut g = Vec::with_capacity(dxhat.len());
    for ((dg, xg), &r) in dxhat.chunks(len).zip(xhat.chunks(len)).zip(rstd) {
        let s1 = dg.iter().fold(T::zero(), |a, &v| a + v);
        let s2 = dg.iter().zip(xg).fold(T::zero(), |a, (&d, &x)| a + d * x);
        g.extend(
            dg.iter()
                .zip(xg)
                .map(|(&d, &x)| r / n * (n * d - s1 - x * s2)),
        );
    }
    g
}

impl<T: Scalar> Graph<T> {
    /// Layer normalization over the last axis of an `N×D` matrix with affine
    /// parameters `gamma, beta: D`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        check_rank("layer_norm", 2, self.shape(x).len())?;
        let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
        check_dim("layer_norm", "gamma length", d, self.value(gamma).numel())?;
        check_dim("layer_norm", "beta length", d, self.value(beta).numel())?;
        let (xhat, rstd, _, _) =
            normalize_groups(self.value(x).data(), d.max(1), T::of(LAYER_NORM_EPS));
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let out = xhat
            .chunks(d.max(1))
            .flat_map(|row| {
                row.iter()
                    .zip(gv.iter().zip(bv))
                    .map(|(&v, (&g, &b))| v * g + b)
            })
            .collect();
        let value = Tensor::new(&[n, d], out)?;
        Ok(self.push_op(
            "layer_norm",
            &[x, gamma, beta],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let gv = ctx.input(1).data();
                let gx = ctx.needs_grad(0).then(|| {
                    let dxhat: Vec<T> = go
                        .chunks(d)
                        .flat_map(|row| row.iter().zip(gv).map(|(&a, &b)| a * b))
                        .collect();
                    normalize_backward(&dxhat, &xhat, &rstd, d)
                });
                let gg = ctx.needs_grad(1).then(|| {
                    let prod: Vec<T> = go.iter().zip(&xhat).map(|(&a, &b)| a * b).collect();
                    super::elementwise::column_sums(&prod, d)
                });
                let gb = ctx
                    .needs_grad(2)
                    .then(|| super::elementwise::column_sums(go, d));
                vec![gx, gg, gb]
            }),
        ))
    }

    /// Batch normalization of a `C×H×W` map. In training graphs the
    /// per-channel statistics of this map are used and returned; in
    /// evaluation graphs the running statistics are used.
    pub fn batch_norm_2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        check_rank("batch_norm_2d", 3, self.shape(x).len())?;
        let c = self.shape(x)[0];
        let plane = self.shape(x)[1] * self.shape(x)[2];
        check_dim(
            "batch_norm_2d",
            "gamma length",
            c,
            self.value(gamma).numel(),
        )?;
        check_dim("batch_norm_2d", "beta length", c, self.value(beta).numel())?;
        check_dim(
            "batch_norm_2d",
            "running mean length",
            c,
            running_mean.len(),
        )?;
        check_dim("batch_norm_2d", "running var length", c, running_var.len())?;
        let eps = T::of(BATCH_NORM_EPS);
        let shape = self.shape(x).to_vec();
        let (gv, bv) = (
            self.value(gamma).data().to_vec(),
            self.value(beta).data().to_vec(),
        );
        if self.is_training() && plane > 1 {
            let (xhat, rstd, means, vars) = normalize_groups(self.value(x).data(), plane, eps);
            let out = xhat
                .chunks(plane)
                .zip(gv.iter().zip(&bv))
                .flat_map(|(row, (&g, &b))| row.iter().map(move |&v| v * g + b))
                .collect();
            let value = Tensor::new(&shape, out)?;
            let unbias = T::of(plane as f64 / (plane as f64 - 1.0));
            let stats = BatchStats {
                mean: means,
                var: vars.into_iter().map(|v| v * unbias).collect(),
            };
            let var = self.push_op(
                "batch_norm_2d",
                &[x, gamma, beta],
                value,
                FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                    let gv = ctx.input(1).data();
                    let gx = ctx.needs_grad(0).then(|| {
                        let dxhat: Vec<T> = go
                            .chunks(plane)
                            .zip(gv)
                            .flat_map(|(row, &g)| row.iter().map(move |&a| a * g))
                            .collect();
                        normalize_backward(&dxhat, &xhat, &rstd, plane)
                    });
                    let gg = ctx.needs_grad(1).then(|| {
                        go.chunks(plane)
                            .zip(xhat.chunks(plane))
                            .map(|(a, b)| a.iter().zip(b).fold(T::zero(), |s, (&p, &q)| s + p * q))
                            .collect()
                    });
                    let gb = ctx.needs_grad(2).then(|| {
                        go.chunks(plane)
                            .map(|a| a.iter().fold(T::zero(), |s, &p| s + p))
                            .collect()
                    });
                    vec![gx, gg, gb]
                }),
            );
            Ok((var, Some(stats)))
        } else {
            let scale: Vec<T> = running_var
                .iter()
                .zip(&gv)
                .map(|(&v, &g)| g / (v + eps).sqrt())
                .collect();
            let rm = running_mean.to_vec();
            let rv_rstd: Vec<T> = running_var
                .iter()
                .map(|&v| T::one() / (v + eps).sqrt())
                .collect();
            let xv = self.value(x).data();
            let out = xv
                .chunks(plane.max(1))
                .enumerate()
                .flat_map(|(ch, row)| {
                    let (s, m, b) = (scale[ch], rm[ch], bv[ch]);
                    row.iter().map(move |&v| (v - m) * s + b)
                })
                .collect();
            let value = Tensor::new(&shape, out)?;
            let var = self.push_op(
                "batch_norm_2d",
                &[x, gamma, beta],
                value,
                FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                    let xv = ctx.input(0).data();
                    let gv = ctx.input(1).data();
                    let p = plane.max(1);
                    let gx = ctx.needs_grad(0).then(|| {
                        go.chunks(p)
                            .enumerate()
                            .flat_map(|(ch, row)| {
                                let s = gv[ch] * rv_rstd[ch];
                                row.iter().map(move |&a| a * s)
                            })
                            .collect()
                    });
                    let gg = ctx.needs_grad(1).then(|| {
                        go.chunks(p)
                            .zip(xv.chunks(p))
                            .enumerate()
                            .map(|(ch, (a, b))| {
                                a.iter().zip(b).fold(T::zero(), |s, (&q, &v)| {
                                    s + q * (v - rm[ch]) * rv_rstd[ch]
                                })
                            })
                            .collect()
                    });
                    let gb = ctx.needs_grad(2).then(|| {
                        go.chunks(p)
                            .map(|a| a.iter().fold(T::zero(), |s, &q| s + q))
                            .collect()
                    });
                    vec![gx, gg, gb]
                }),
            );
            Ok((var, None))
        }
    }
}

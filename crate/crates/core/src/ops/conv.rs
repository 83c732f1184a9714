use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Error, Result};
use crate::scalar::{dot, gemm};
use crate::{Graph, Scalar, Tensor, Var};

/// Output extent of a convolution: `(size + 2·padding − k) / stride + 1`.
pub fn conv_output_size(size: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry) -> Vec<T> {
    let n = g.oh * g.ow;
    let mut cols = vec![T::zero(); g.c_in * g.k * g.k * n];
    for ci in 0..g.c_in {
        for u in 0..g.k {
            for v in 0..g.k {
                let row = ((ci * g.k + u) * g.k + v) * n;
                let dx = v as isize - g.pad as isize;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + u) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x[ci * g.h * g.w + iy as usize * g.w..][..g.w];
                    let dst = &mut cols[row + oy * g.ow..][..g.ow];
                    if g.stride == 1 {
                        let (j0, j1) = valid_range(g.w, dx);
                        let j1 = j1.min(g.ow);
                        if j0 < j1 {
                            dst[j0..j1].copy_from_slice(
                                &src[(j0 as isize + dx) as usize..(j1 as isize + dx) as usize],
                            );
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * g.stride) as isize + dx;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry) -> Vec<T> {
    let n = g.oh * g.ow;
    let mut x = vec![T::zero(); g.c_in * g.h * g.w];
    for ci in 0..g.c_in {
        for u in 0..g.k {
            for v in 0..g.k {
                let row = ((ci * g.k + u) * g.k + v) * n;
                let dx = v as isize - g.pad as isize;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + u) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut x[ci * g.h * g.w + iy as usize * g.w..][..g.w];
                    let src = &cols[row + oy * g.ow..][..g.ow];
                    if g.stride == 1 {
                        let (j0, j1) = valid_range(g.w, dx);
                        let j1 = j1.min(g.ow);
                        if j0 < j1 {
                            let d =
                                &mut dst[(j0 as isize + dx) as usize..(j1 as isize + dx) as usize];
                            d.iter_mut()
                                .zip(&src[j0..j1])
                                .for_each(|(a, &b)| *a = *a + b);
                        }
                    } else {
                        for (ox, &sv) in src.iter().enumerate() {
                            let ix = (ox * g.stride) as isize + dx;
                            if ix >= 0 && ix < g.w as isize {
                                dst[ix as usize] = dst[ix as usize] + sv;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// A spatial offset `(dy, dx)` paired with its flat index into a `k×k` kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    pub dy: isize,
    pub dx: isize,
    pub index: usize,
}

/// Taps of a dense centered `k×k` kernel in row-major order.
pub fn dense_taps(k: usize) -> Vec<Tap> {
    let r = (k / 2) as isize;
    (0..k * k)
        .map(|i| Tap {
            dy: (i / k) as isize - r,
            dx: (i % k) as isize - r,
            index: i,
        })
        .collect()
}

/// `out[c,i,j] += w[c,tap] · x[c, i+dy, j+dx]` for one tap over all valid
/// output rows/columns (zero padding elsewhere).
fn shifted_axpy<T: Scalar>(
    out: &mut [T],
    x: &[T],
    wv: T,
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
) {
    let (i0, i1) = valid_range(h, dy);
    let (j0, j1) = valid_range(w, dx);
    for i in i0..i1 {
        let si = (i as isize + dy) as usize;
        let o = &mut out[i * w + j0..i * w + j1];
        let s = &x[si * w + (j0 as isize + dx) as usize..si * w + (j1 as isize + dx) as usize];
        o.iter_mut().zip(s).for_each(|(a, &b)| *a = *a + wv * b);
    }
}

/// Output indices `i` in `[0, n)` for which `i + d` is also in `[0, n)`.
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo.min(n), hi.max(lo.min(n)))
}

impl<T: Scalar> Graph<T> {
    /// 2-D cross-correlation with zero padding:
    /// `input: C_in×H×W`, `weight: C_out×C_in×k×k`, `bias: C_out`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        check_rank("conv2d", 3, self.shape(input).len())?;
        check_rank("conv2d", 4, self.shape(weight).len())?;
        let (c_in, h, w) = (
            self.shape(input)[0],
            self.shape(input)[1],
            self.shape(input)[2],
        );
        let ws = self.shape(weight).to_vec();
        let (c_out, k) = (ws[0], ws[2]);
        check_dim("conv2d", "weight input channels", c_in, ws[1])?;
        check_dim("conv2d", "kernel width", k, ws[3])?;
        if k % 2 == 0 {
            return Err(Error::invalid("conv2d", "kernel size must be odd"));
        }
        if let Some(b) = bias {
            check_rank("conv2d", 1, self.shape(b).len())?;
            check_dim("conv2d", "bias length", c_out, self.shape(b)[0])?;
        }
        let (Some(oh), Some(ow)) = (
            conv_output_size(h, k, stride, padding),
            conv_output_size(w, k, stride, padding),
        ) else {
            return Err(Error::invalid(
                "conv2d",
                "kernel larger than padded input or zero stride",
            ));
        };
        let geo = Geometry {
            c_in,
            h,
            w,
            k,
            stride,
            pad: padding,
            oh,
            ow,
        };
        let n = oh * ow;
        let kk = c_in * k * k;
        let cols = if geo.is_pointwise() {
            None
        } else {
            Some(im2col(self.value(input).data(), &geo))
        };
        let mut out = vec![T::zero(); c_out * n];
        if let Some(b) = bias {
            for (row, &bv) in out.chunks_mut(n.max(1)).zip(self.value(b).data()) {
                row.iter_mut().for_each(|v| *v = bv);
            }
        }
        {
            let cm = cols.as_deref().unwrap_or(self.value(input).data());
            gemm(
                false,
                false,
                c_out,
                kk,
                n,
                self.value(weight).data(),
                cm,
                &mut out,
                bias.is_some(),
            );
        }
        let value = Tensor::new(&[c_out, oh, ow], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push_op(
            "conv2d",
            &inputs,
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let wv = ctx.input(1).data();
                let gx = ctx.needs_grad(0).then(|| {
                    let mut dcols = vec![T::zero(); kk * n];
                    gemm(true, false, kk, c_out, n, wv, go, &mut dcols, false);
                    if geo.is_pointwise() {
                        dcols
                    } else {
                        col2im(&dcols, &geo)
                    }
                });
                let gw = ctx.needs_grad(1).then(|| {
                    let cm = cols.as_deref().unwrap_or(ctx.input(0).data());
                    let mut g = vec![T::zero(); c_out * kk];
                    gemm(false, true, c_out, n, kk, go, cm, &mut g, false);
                    g
                });
                let mut grads = vec![gx, gw];
                if ctx.input_count() == 3 {
                    grads.push(ctx.needs_grad(2).then(|| {
                        go.chunks(n.max(1))
                            .map(|r| r.iter().fold(T::zero(), |a, &v| a + v))
                            .collect()
                    }));
                }
                grads
            }),
        ))
    }

    /// Per-channel convolution, `input: C×H×W`, `weight: C×k×k`,
    /// same-size output with `padding = (k−1)/2`.
    pub fn depthwise_conv2d(&mut self, input: Var, weight: Var, padding: usize) -> Result<Var> {
        check_rank("depthwise_conv2d", 3, self.shape(weight).len())?;
        let k = self.shape(weight)[1];
        check_dim("depthwise_conv2d", "kernel width", k, self.shape(weight)[2])?;
        if k.is_multiple_of(2) {
            return Err(Error::invalid(
                "depthwise_conv2d",
                "kernel size must be odd",
            ));
        }
        check_dim("depthwise_conv2d", "padding", (k - 1) / 2, padding)?;
        self.tap_conv(input, weight, &dense_taps(k), "depthwise_conv2d")
    }

    /// Depthwise convolution that only visits the listed kernel taps, in
    /// order. `weight: C×k×k`; cells not listed never influence the output
    /// and receive zero gradient.
    pub fn tap_conv(
        &mut self,
        input: Var,
        weight: Var,
        taps: &[Tap],
        name: &'static str,
    ) -> Result<Var> {
        check_rank(name, 3, self.shape(input).len())?;
        check_rank(name, 3, self.shape(weight).len())?;
        let (c, h, w) = (
            self.shape(input)[0],
            self.shape(input)[1],
            self.shape(input)[2],
        );
        check_dim(name, "channels", c, self.shape(weight)[0])?;
        let kk = self.shape(weight)[1] * self.shape(weight)[2];
        if taps.iter().any(|t| t.index >= kk) {
            return Err(Error::invalid(name, "tap index outside the kernel"));
        }
        let plane = h * w;
        let taps = taps.to_vec();
        let mut out = vec![T::zero(); c * plane];
        {
            let (xv, wv) = (self.value(input).data(), self.value(weight).data());
            for ch in 0..c {
                let o = &mut out[ch * plane..(ch + 1) * plane];
                let x = &xv[ch * plane..(ch + 1) * plane];
                for t in &taps {
                    shifted_axpy(o, x, wv[ch * kk + t.index], h, w, t.dy, t.dx);
                }
            }
        }
        let value = Tensor::new(&[c, h, w], out)?;
        Ok(self.push_op(
            name,
            &[input, weight],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (xv, wv) = (ctx.input(0).data(), ctx.input(1).data());
                let gx = ctx.needs_grad(0).then(|| {
                    let mut g = vec![T::zero(); c * plane];
                    for ch in 0..c {
                        let gch = &mut g[ch * plane..(ch + 1) * plane];
                        let goc = &go[ch * plane..(ch + 1) * plane];
                        for t in &taps {
                            shifted_axpy(gch, goc, wv[ch * kk + t.index], h, w, -t.dy, -t.dx);
                        }
                    }
                    g
                });
                let gw = ctx.needs_grad(1).then(|| {
                    let mut g = vec![T::zero(); c * kk];
                    for ch in 0..c {
                        let x = &xv[ch * plane..(ch + 1) * plane];
                        let goc = &go[ch * plane..(ch + 1) * plane];
                        for t in &taps {
                            let (i0, i1) = valid_range(h, t.dy);
                            let (j0, j1) = valid_range(w, t.dx);
                            let mut acc = T::zero();
                            for i in i0..i1 {
                                let si = (i as isize + t.dy) as usize;
                                let xs = (si * w) as isize + t.dx;
                                acc = acc
                                    + dot(
                                        &goc[i * w + j0..i * w + j1],
                                        &x[(xs + j0 as isize) as usize
                                            ..(xs + j1 as isize) as usize],
                                    );
                            }
                            g[ch * kk + t.index] = g[ch * kk + t.index] + acc;
                        }
                    }
                    g
                });
                vec![gx, gw]
            }),
        ))
    }
}

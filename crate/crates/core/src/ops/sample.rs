use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Error, Result};
use crate::{Graph, Scalar, Tensor, Var};

/// Bilinear footprint of one continuous coordinate: the four enclosing
/// lattice points (row-major: top-left, top-right, bottom-left,
/// bottom-right) as flat indices, `None` when outside the image, with their
/// interpolation weights and the weights' derivatives w.r.t. `y` and `x`.
#[derive(Debug, Clone, Copy)]
pub struct Footprint<T> {
    pub index: [Option<usize>; 4],
    pub weight: [T; 4],
    pub d_dy: [T; 4],
    pub d_dx: [T; 4],
}

/// Computes the bilinear footprint of `(y, x)` on an `h×w` lattice.
pub fn bilinear_weights<T: Scalar>(y: T, x: T, h: usize, w: usize) -> Footprint<T> {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (iy, ix) = (
        y0.to_i64().unwrap_or(i64::MIN / 2),
        x0.to_i64().unwrap_or(i64::MIN / 2),
    );
    let one = T::one();
    let at = |r: i64, c: i64| -> Option<usize> {
        (r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w)
            .then(|| r as usize * w + c as usize)
    };
    Footprint {
        index: [
            at(iy, ix),
            at(iy, ix + 1),
            at(iy + 1, ix),
            at(iy + 1, ix + 1),
        ],
        weight: [
            (one - fy) * (one - fx),
            (one - fy) * fx,
            fy * (one - fx),
            fy * fx,
        ],
        d_dy: [-(one - fx), -fx, one - fx, fx],
        d_dx: [-(one - fy), one - fy, -fy, fy],
    }
}

// ×2 upsampling is separable: columns first, then rows. Even outputs copy
// input `i`; odd outputs average inputs `i` and `min(i + 1, n − 1)`.
fn upsample_cols<T: Scalar>(x: &[T], rows: usize, w: usize) -> Vec<T> {
    let half = T::of(0.5);
    let mut out = vec![T::zero(); rows * 2 * w];
    for (src, dst) in x.chunks(w).zip(out.chunks_mut(2 * w)) {
        for j in 0..w {
            let next = src[(j + 1).min(w - 1)];
            dst[2 * j] = src[j];
            dst[2 * j + 1] = half * src[j] + half * next;
        }
    }
    out
}

fn upsample_cols_adjoint<T: Scalar>(g: &[T], rows: usize, w: usize) -> Vec<T> {
    let half = T::of(0.5);
    let mut out = vec![T::zero(); rows * w];
    for (src, dst) in g.chunks(2 * w).zip(out.chunks_mut(w)) {
        for j in 0..w {
            let odd = half * src[2 * j + 1];
            dst[j] = dst[j] + src[2 * j] + odd;
            let n = (j + 1).min(w - 1);
            dst[n] = dst[n] + odd;
        }
    }
    out
}

fn upsample_rows<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let half = T::of(0.5);
    let mut out = vec![T::zero(); c * 2 * h * w];
    for (src, dst) in x.chunks(h * w).zip(out.chunks_mut(2 * h * w)) {
        for i in 0..h {
            let (a, b) = (
                &src[i * w..(i + 1) * w],
                &src[(i + 1).min(h - 1) * w..][..w],
            );
            dst[2 * i * w..(2 * i + 1) * w].copy_from_slice(a);
            dst[(2 * i + 1) * w..(2 * i + 2) * w]
                .iter_mut()
                .zip(a.iter().zip(b))
                .for_each(|(d, (&a, &b))| *d = half * a + half * b);
        }
    }
    out
}

fn upsample_rows_adjoint<T: Scalar>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let half = T::of(0.5);
    let mut out = vec![T::zero(); c * h * w];
    for (src, dst) in g.chunks(2 * h * w).zip(out.chunks_mut(h * w)) {
        for i in 0..h {
            let (even, odd) = (&src[2 * i * w..][..w], &src[(2 * i + 1) * w..][..w]);
            dst[i * w..(i + 1) * w]
                .iter_mut()
                .zip(even.iter().zip(odd))
                .for_each(|(d, (&e, &o))| *d = *d + e + half * o);
            let n = (i + 1).min(h - 1);
            dst[n * w..(n + 1) * w]
                .iter_mut()
                .zip(odd)
                .for_each(|(d, &o)| *d = *d + half * o);
        }
    }
    out
}

impl<T: Scalar> Graph<T> {
    /// Samples `input: C×H×W` at `coords: M×2` (row, column) with bilinear
    /// interpolation and zero padding, producing `C×M`. Differentiable with
    /// respect to both the input values and the coordinates.
    pub fn bilinear_sample(&mut self, input: Var, coords: Var) -> Result<Var> {
        check_rank("bilinear_sample", 3, self.shape(input).len())?;
        check_rank("bilinear_sample", 2, self.shape(coords).len())?;
        check_dim(
            "bilinear_sample",
            "coordinate arity",
            2,
            self.shape(coords)[1],
        )?;
        let (c, h, w) = (
            self.shape(input)[0],
            self.shape(input)[1],
            self.shape(input)[2],
        );
        let m = self.shape(coords)[0];
        let cv = self.value(coords).data();
        if !cv.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                op: "bilinear_sample",
            });
        }
        let feet: Vec<Footprint<T>> = cv
            .chunks(2)
            .map(|p| bilinear_weights(p[0], p[1], h, w))
            .collect();
        let plane = h * w;
        let xv = self.value(input).data();
        let mut out = vec![T::zero(); c * m];
        for ch in 0..c {
            let x = &xv[ch * plane..(ch + 1) * plane];
            for (o, f) in out[ch * m..(ch + 1) * m].iter_mut().zip(&feet) {
                let mut acc = T::zero();
                for q in 0..4 {
                    if let Some(i) = f.index[q] {
                        acc = acc + f.weight[q] * x[i];
                    }
                }
                *o = acc;
            }
        }
        let value = Tensor::new(&[c, m], out)?;
        Ok(self.push_op(
            "bilinear_sample",
            &[input, coords],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let xv = ctx.input(0).data();
                let gx = ctx.needs_grad(0).then(|| {
                    let mut g = vec![T::zero(); c * plane];
                    for ch in 0..c {
                        let gch = &mut g[ch * plane..(ch + 1) * plane];
                        for (&gv, f) in go[ch * m..(ch + 1) * m].iter().zip(&feet) {
                            for q in 0..4 {
                                if let Some(i) = f.index[q] {
                                    gch[i] = gch[i] + f.weight[q] * gv;
                                }
                            }
                        }
                    }
                    g
                });
                let gc = ctx.needs_grad(1).then(|| {
                    let mut g = vec![T::zero(); m * 2];
                    for ch in 0..c {
                        let x = &xv[ch * plane..(ch + 1) * plane];
                        for (k, (&gv, f)) in go[ch * m..(ch + 1) * m].iter().zip(&feet).enumerate()
                        {
                            let (mut dy, mut dx) = (T::zero(), T::zero());
                            for q in 0..4 {
                                if let Some(i) = f.index[q] {
                                    dy = dy + f.d_dy[q] * x[i];
                                    dx = dx + f.d_dx[q] * x[i];
                                }
                            }
                            g[2 * k] = g[2 * k] + gv * dy;
                            g[2 * k + 1] = g[2 * k + 1] + gv * dx;
                        }
                    }
                    g
                });
                vec![gx, gc]
            }),
        ))
    }

    /// Broadcasts `K` offsets over every pixel of an `h×w` grid:
    /// row `k·h·w + i·w + j` of the `(K·h·w)×2` result is
    /// `(i, j) + offsets[k]`.
    pub fn shift_grid(&mut self, offsets: Var, h: usize, w: usize) -> Result<Var> {
        check_rank("shift_grid", 2, self.shape(offsets).len())?;
        check_dim("shift_grid", "offset arity", 2, self.shape(offsets)[1])?;
        let k = self.shape(offsets)[0];
        let ov = self.value(offsets).data();
        let mut data = Vec::with_capacity(k * h * w * 2);
        for t in 0..k {
            for i in 0..h {
                for j in 0..w {
                    data.push(T::of(i as f64) + ov[2 * t]);
                    data.push(T::of(j as f64) + ov[2 * t + 1]);
                }
            }
        }
        let value = Tensor::new(&[k * h * w, 2], data)?;
        let plane = h * w;
        Ok(self.push_op(
            "shift_grid",
            &[offsets],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let mut g = vec![T::zero(); k * 2];
                for t in 0..k {
                    for p in 0..plane {
                        let r = (t * plane + p) * 2;
                        g[2 * t] = g[2 * t] + go[r];
                        g[2 * t + 1] = g[2 * t + 1] + go[r + 1];
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Bilinear ×2 upsampling of `C×H×W` to `C×2H×2W` under the
    /// center-aligned convention described in [`crate::ops`].
    pub fn upsample_x2(&mut self, input: Var) -> Result<Var> {
        check_rank("upsample_x2", 3, self.shape(input).len())?;
        let (c, h, w) = (
            self.shape(input)[0],
            self.shape(input)[1],
            self.shape(input)[2],
        );
        if h == 0 || w == 0 {
            return Err(Error::invalid("upsample_x2", "empty spatial extent"));
        }
        let (oh, ow) = (2 * h, 2 * w);
        let wide = upsample_cols(self.value(input).data(), c * h, w);
        let out = upsample_rows(&wide, c, h, ow);
        let value = Tensor::new(&[c, oh, ow], out)?;
        Ok(self.push_op(
            "upsample_x2",
            &[input],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let g_wide = upsample_rows_adjoint(go, c, h, ow);
                vec![Some(upsample_cols_adjoint(&g_wide, c * h, w))]
            }),
        ))
    }
}

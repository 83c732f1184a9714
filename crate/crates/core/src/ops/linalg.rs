use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Result};
use crate::scalar::gemm;
use crate::{Graph, Scalar, Tensor, Var};

fn dims2<T: Scalar>(g: &Graph<T>, op: &'static str, x: Var) -> Result<(usize, usize)> {
    let s = g.shape(x);
    check_rank(op, 2, s.len())?;
    Ok((s[0], s[1]))
}

impl<T: Scalar> Graph<T> {
    /// Affine map `x·Wᵀ + b` for `x: N×D_in`, `W: D_out×D_in`, `b: D_out`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (n, d_in) = dims2(self, "linear", x)?;
        let (d_out, w_in) = dims2(self, "linear", weight)?;
        check_dim("linear", "input features", w_in, d_in)?;
        if let Some(b) = bias {
            check_rank("linear", 1, self.shape(b).len())?;
            check_dim("linear", "bias length", d_out, self.shape(b)[0])?;
        }
        let mut out = vec![T::zero(); n * d_out];
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for row in out.chunks_mut(d_out.max(1)) {
                row.copy_from_slice(bv);
            }
        }
        gemm(
            false,
            true,
            n,
            d_in,
            d_out,
            self.value(x).data(),
            self.value(weight).data(),
            &mut out,
            bias.is_some(),
        );
        let value = Tensor::new(&[n, d_out], out)?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push_op(
            "linear",
            &inputs,
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (xv, wv) = (ctx.input(0).data(), ctx.input(1).data());
                let gx = ctx.needs_grad(0).then(|| {
                    let mut g = vec![T::zero(); n * d_in];
                    gemm(false, false, n, d_out, d_in, go, wv, &mut g, false);
                    g
                });
                let gw = ctx.needs_grad(1).then(|| {
                    let mut g = vec![T::zero(); d_out * d_in];
                    gemm(true, false, d_out, n, d_in, go, xv, &mut g, false);
                    g
                });
                let mut grads = vec![gx, gw];
                if inputs_has_bias(ctx) {
                    grads.push(
                        ctx.needs_grad(2)
                            .then(|| super::elementwise::column_sums(go, d_out)),
                    );
                }
                grads
            }),
        ))
    }

    /// `A·B` for `A: M×K`, `B: K×N`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self, "matmul", a)?;
        let (kb, n) = dims2(self, "matmul", b)?;
        check_dim("matmul", "inner dimension", k, kb)?;
        let mut out = vec![T::zero(); m * n];
        gemm(
            false,
            false,
            m,
            k,
            n,
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            false,
        );
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push_op(
            "matmul",
            &[a, b],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (av, bv) = (ctx.input(0).data(), ctx.input(1).data());
                let ga = ctx.needs_grad(0).then(|| {
                    let mut g = vec![T::zero(); m * k];
                    gemm(false, true, m, n, k, go, bv, &mut g, false);
                    g
                });
                let gb = ctx.needs_grad(1).then(|| {
                    let mut g = vec![T::zero(); k * n];
                    gemm(true, false, k, m, n, av, go, &mut g, false);
                    g
                });
                vec![ga, gb]
            }),
        ))
    }

    /// `A·Bᵀ` for `A: M×K`, `B: N×K`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self, "matmul_nt", a)?;
        let (n, kb) = dims2(self, "matmul_nt", b)?;
        check_dim("matmul_nt", "inner dimension", k, kb)?;
        let mut out = vec![T::zero(); m * n];
        gemm(
            false,
            true,
            m,
            k,
            n,
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            false,
        );
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push_op(
            "matmul_nt",
            &[a, b],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (av, bv) = (ctx.input(0).data(), ctx.input(1).data());
                let ga = ctx.needs_grad(0).then(|| {
                    let mut g = vec![T::zero(); m * k];
                    gemm(false, false, m, n, k, go, bv, &mut g, false);
                    g
                });
                let gb = ctx.needs_grad(1).then(|| {
                    let mut g = vec![T::zero(); n * k];
                    gemm(true, false, n, m, k, go, av, &mut g, false);
                    g
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self, "transpose", x)?;
        let value = Tensor::new(&[c, r], transpose_data(self.value(x).data(), r, c))?;
        Ok(self.push_op(
            "transpose",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                vec![Some(transpose_data(go, c, r))]
            }),
        ))
    }

    /// Row-wise softmax of a 2-D matrix.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (_, c) = dims2(self, "softmax_rows", x)?;
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let m = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z = z + *v;
            }
            row.iter_mut().for_each(|v| *v = *v / z);
        }
        let value = Tensor::new(self.shape(x), out)?;
        Ok(self.push_op(
            "softmax_rows",
            &[x],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let y = ctx.output().data();
                let mut g = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(c.max(1)).zip(go.chunks(c.max(1))) {
                    let dot = yr.iter().zip(gr).fold(T::zero(), |a, (&p, &q)| a + p * q);
                    g.extend(yr.iter().zip(gr).map(|(&p, &q)| p * (q - dot)));
                }
                vec![Some(g)]
            }),
        ))
    }
}

fn inputs_has_bias<T: Scalar>(ctx: &BackwardCtx<'_, T>) -> bool {
    ctx.input_count() == 3
}

pub(crate) fn transpose_data<T: Copy>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for j in 0..cols {
        for i in 0..rows {
            out.push(x[i * cols + j]);
        }
    }
    out
}

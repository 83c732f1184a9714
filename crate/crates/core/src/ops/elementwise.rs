use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Result};
use crate::{Graph, Scalar, Tensor, Var};

fn same_shape<T: Scalar>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    check_rank(op, sa.len(), sb.len())?;
    for (&x, &y) in sa.iter().zip(sb) {
        check_dim(op, "extent", x, y)?;
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    fn unary(
        &mut self,
        name: &'static str,
        x: Var,
        f: impl Fn(T) -> T,
        // derivative from (input, output)
        df: fn(T, T) -> T,
    ) -> Var {
        let value = self.value(x).map(f);
        self.push_op(
            name,
            &[x],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (xs, ys) = (ctx.input(0).data(), ctx.output().data());
                let g = go
                    .iter()
                    .zip(xs.iter().zip(ys))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "add", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push_op(
            "add",
            &[a, b],
            value,
            FnBackward(|_: &BackwardCtx<'_, T>, go: &[T]| {
                vec![Some(go.to_vec()), Some(go.to_vec())]
            }),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "sub", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push_op(
            "sub",
            &[a, b],
            value,
            FnBackward(|_: &BackwardCtx<'_, T>, go: &[T]| {
                vec![Some(go.to_vec()), Some(go.iter().map(|&g| -g).collect())]
            }),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "mul", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push_op(
            "mul",
            &[a, b],
            value,
            FnBackward(|ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (a, b) = (ctx.input(0).data(), ctx.input(1).data());
                let ga = ctx
                    .needs_grad(0)
                    .then(|| go.iter().zip(b).map(|(&g, &y)| g * y).collect());
                let gb = ctx
                    .needs_grad(1)
                    .then(|| go.iter().zip(a).map(|(&g, &x)| g * x).collect());
                vec![ga, gb]
            }),
        ))
    }

    /// Elementwise `a / b`.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "div", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x / y);
        Ok(self.push_op(
            "div",
            &[a, b],
            value,
            FnBackward(|ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (b, q) = (ctx.input(1).data(), ctx.output().data());
                let ga = ctx
                    .needs_grad(0)
                    .then(|| go.iter().zip(b).map(|(&g, &y)| g / y).collect());
                let gb = ctx.needs_grad(1).then(|| {
                    go.iter()
                        .zip(b.iter().zip(q))
                        .map(|(&g, (&y, &q))| -g * q / y)
                        .collect()
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push_op(
            "scale",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                vec![Some(go.iter().map(|&g| g * c).collect())]
            }),
        )
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push_op(
            "add_scalar",
            &[x],
            value,
            FnBackward(|_: &BackwardCtx<'_, T>, go: &[T]| vec![Some(go.to_vec())]),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            "relu",
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary("sigmoid", x, sigmoid, |_, y| y * (T::one() - y))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary("softplus", x, softplus, |x, _| sigmoid(x))
    }

    /// Gaussian error linear unit, tanh approximation.
    /// GELU, tanh approximation. The derivative is saved during the
    /// forward pass.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (values, slopes): (Vec<T>, Vec<T>) = self
            .value(x)
            .data()
            .iter()
            .map(|&v| gelu_with_grad(v))
            .unzip();
        let value = Tensor::new(self.shape(x), values).expect("same shape");
        self.push_op(
            "gelu",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                vec![Some(go.iter().zip(&slopes).map(|(&g, &d)| g * d).collect())]
            }),
        )
    }

    /// Multiplies each channel of a `C×…` tensor by the matching entry of a
    /// length-`C` vector.
    pub fn mul_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_rank("mul_channels", 1, self.shape(gate).len())?;
        let c = shape[0];
        check_dim("mul_channels", "channels", c, self.shape(gate)[0])?;
        let plane = self.value(x).numel() / c.max(1);
        let xs = self.value(x).data();
        let gs = self.value(gate).data();
        let data = xs
            .chunks(plane.max(1))
            .zip(gs)
            .flat_map(|(row, &s)| row.iter().map(move |&v| v * s))
            .collect();
        let value = Tensor::new(&shape, data)?;
        Ok(self.push_op(
            "mul_channels",
            &[x, gate],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let (xs, gs) = (ctx.input(0).data(), ctx.input(1).data());
                let gx = ctx.needs_grad(0).then(|| {
                    go.chunks(plane.max(1))
                        .zip(gs)
                        .flat_map(|(row, &s)| row.iter().map(move |&g| g * s))
                        .collect()
                });
                let gg = ctx.needs_grad(1).then(|| {
                    go.chunks(plane.max(1))
                        .zip(xs.chunks(plane.max(1)))
                        .map(|(gr, xr)| gr.iter().zip(xr).fold(T::zero(), |a, (&g, &v)| a + g * v))
                        .collect()
                });
                vec![gx, gg]
            }),
        ))
    }

    /// Adds a length-`D` row vector to every row of an `N×D` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        check_rank("add_row", 2, self.shape(x).len())?;
        let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
        check_dim("add_row", "columns", d, self.value(row).numel())?;
        let r = self.value(row).data().to_vec();
        let data = self
            .value(x)
            .data()
            .chunks(d.max(1))
            .flat_map(|xr| xr.iter().zip(&r).map(|(&a, &b)| a + b))
            .collect();
        let value = Tensor::new(&[n, d], data)?;
        Ok(self.push_op(
            "add_row",
            &[x, row],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let gr = ctx.needs_grad(1).then(|| column_sums(go, d));
                vec![Some(go.to_vec()), gr]
            }),
        ))
    }
}

pub(crate) fn column_sums<T: Scalar>(m: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for row in m.chunks(cols.max(1)) {
        out.iter_mut().zip(row).for_each(|(o, &v)| *o = *o + v);
    }
    out
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + log1p(exp(-|x|))
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn gelu_with_grad<T: Scalar>(x: T) -> (T, T) {
    let c = T::of(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = T::of(0.044_715);
    let half = T::of(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    let du = c * (T::one() + T::of(3.0) * k * x * x);
    let y = half * x * (T::one() + t);
    (
        y,
        half * (T::one() + t) + half * x * (T::one() - t * t) * du,
    )
}

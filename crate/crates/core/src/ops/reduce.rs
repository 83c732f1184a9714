use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Error, Result};
use crate::{Graph, Scalar, Tensor, Var};

impl<T: Scalar> Graph<T> {
    pub fn sum(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let value = Tensor::scalar(self.value(x).sum());
        self.push_op(
            "sum",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| vec![Some(vec![go[0]; n])]),
        )
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        if n == 0 {
            return Err(Error::invalid("mean", "empty tensor"));
        }
        let s = self.sum(x);
        Ok(self.scale(s, T::one() / T::of(n as f64)))
    }

    /// `Σ x ⊙ w` for a constant weight tensor of the same shape. Used to
    /// reduce an output to a scalar with a non-degenerate gradient.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        check_dim(
            "weighted_sum",
            "element count",
            self.value(x).numel(),
            weights.numel(),
        )?;
        let w = weights.data().to_vec();
        let value = Tensor::scalar(
            self.value(x)
                .data()
                .iter()
                .zip(&w)
                .fold(T::zero(), |a, (&v, &c)| a + v * c),
        );
        Ok(self.push_op(
            "weighted_sum",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                vec![Some(w.iter().map(|&c| c * go[0]).collect())]
            }),
        ))
    }

    /// Mean over rows of an `N×D` matrix, giving a length-`D` vector.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        check_rank("mean_rows", 2, self.shape(x).len())?;
        let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
        if n == 0 {
            return Err(Error::invalid("mean_rows", "empty token set"));
        }
        let inv = T::one() / T::of(n as f64);
        let sums = super::elementwise::column_sums(self.value(x).data(), d);
        let value = Tensor::new(&[d], sums.into_iter().map(|s| s * inv).collect())?;
        Ok(self.push_op(
            "mean_rows",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let g: Vec<T> = (0..n).flat_map(|_| go.iter().map(|&v| v * inv)).collect();
                vec![Some(g)]
            }),
        ))
    }

    /// Global average pool of a `C×H×W` map to a length-`C` vector.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        check_rank("global_avg_pool", 3, self.shape(x).len())?;
        let c = self.shape(x)[0];
        let plane = self.shape(x)[1] * self.shape(x)[2];
        if plane == 0 {
            return Err(Error::invalid("global_avg_pool", "empty spatial extent"));
        }
        let inv = T::one() / T::of(plane as f64);
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * inv)
            .collect();
        let value = Tensor::new(&[c], data)?;
        Ok(self.push_op(
            "global_avg_pool",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let g = go
                    .iter()
                    .flat_map(|&v| core::iter::repeat_n(v * inv, plane))
                    .collect();
                vec![Some(g)]
            }),
        ))
    }
}

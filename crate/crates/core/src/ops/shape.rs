use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Error, Result};
use crate::{Graph, Scalar, Tensor, Var};

/// Source index of every output element of a patchify permutation.
/// Token `t` (row-major over the patch grid) holds its pixels channel-major,
/// then row, then column.
fn patch_perm(c: usize, h: usize, w: usize, p: usize) -> Vec<usize> {
    let (gh, gw) = (h / p, w / p);
    let mut perm = Vec::with_capacity(c * h * w);
    for ty in 0..gh {
        for tx in 0..gw {
            for ch in 0..c {
                for dy in 0..p {
                    for dx in 0..p {
                        perm.push(ch * h * w + (ty * p + dy) * w + tx * p + dx);
                    }
                }
            }
        }
    }
    perm
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (dst, &src) in perm.iter().enumerate() {
        inv[src] = dst;
    }
    inv
}

/// Splits a `C×H×W` image into `N×(C·p²)` patch tokens.
pub fn patchify<T: Scalar>(image: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let (c, h, w) = image_dims(image.shape(), patch, "patchify")?;
    let perm = patch_perm(c, h, w, patch);
    let data = perm.iter().map(|&i| image.data()[i]).collect();
    Tensor::new(&[(h / patch) * (w / patch), c * patch * patch], data)
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Scalar>(
    tokens: &Tensor<T>,
    channels: usize,
    h: usize,
    w: usize,
    patch: usize,
) -> Result<Tensor<T>> {
    image_dims(&[channels, h, w], patch, "unpatchify")?;
    check_dim(
        "unpatchify",
        "element count",
        channels * h * w,
        tokens.numel(),
    )?;
    let perm = patch_perm(channels, h, w, patch);
    let mut data = vec![T::zero(); tokens.numel()];
    for (dst, &src) in perm.iter().enumerate() {
        data[src] = tokens.data()[dst];
    }
    Tensor::new(&[channels, h, w], data)
}

fn image_dims(shape: &[usize], patch: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    check_rank(op, 3, shape.len())?;
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::invalid(
            op,
            alloc::format!("{h}×{w} is not divisible into {patch}×{patch} patches"),
        ));
    }
    Ok((c, h, w))
}

impl<T: Scalar> Graph<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push_op(
            "reshape",
            &[x],
            value,
            FnBackward(|_: &BackwardCtx<'_, T>, go: &[T]| vec![Some(go.to_vec())]),
        ))
    }

    /// Gathers `out[i] = x[perm[i]]` into a tensor of the given shape.
    pub fn permute_elements(&mut self, x: Var, perm: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let n = self.value(x).numel();
        check_dim("permute_elements", "element count", n, perm.len())?;
        let data = perm.iter().map(|&i| self.value(x).data()[i]).collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push_op(
            "permute_elements",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let mut g = vec![T::zero(); n];
                for (dst, &src) in perm.iter().enumerate() {
                    g[src] = g[src] + go[dst];
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn patchify(&mut self, image: Var, patch: usize) -> Result<Var> {
        let (c, h, w) = image_dims(self.shape(image), patch, "patchify")?;
        let perm = patch_perm(c, h, w, patch);
        self.permute_elements(image, perm, &[(h / patch) * (w / patch), c * patch * patch])
    }

    pub fn unpatchify(
        &mut self,
        tokens: Var,
        channels: usize,
        h: usize,
        w: usize,
        patch: usize,
    ) -> Result<Var> {
        image_dims(&[channels, h, w], patch, "unpatchify")?;
        check_dim(
            "unpatchify",
            "element count",
            channels * h * w,
            self.value(tokens).numel(),
        )?;
        let perm = invert(&patch_perm(channels, h, w, patch));
        self.permute_elements(tokens, perm, &[channels, h, w])
    }

    /// Concatenates along the leading axis; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            check_rank("concat", tail.len() + 1, s.len())?;
            for (&a, &b) in tail.iter().zip(&s[1..]) {
                check_dim("concat", "trailing extent", a, b)?;
            }
            lead += s[0];
            sizes.push(self.value(p).numel());
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend(&tail);
        let value = Tensor::new(&shape, data)?;
        Ok(self.push_op(
            "concat",
            parts,
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let mut off = 0;
                sizes
                    .iter()
                    .map(|&n| {
                        let g = go[off..off + n].to_vec();
                        off += n;
                        Some(g)
                    })
                    .collect()
            }),
        ))
    }

    /// Concatenates 2-D matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat_cols", "no inputs"))?;
        check_rank("concat_cols", 2, self.shape(*first).len())?;
        let rows = self.shape(*first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            check_rank("concat_cols", 2, self.shape(p).len())?;
            check_dim("concat_cols", "rows", rows, self.shape(p)[0])?;
            widths.push(self.shape(p)[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(&[rows, total], data)?;
        Ok(self.push_op(
            "concat_cols",
            parts,
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let mut grads: Vec<Vec<T>> = widths
                    .iter()
                    .map(|&w| Vec::with_capacity(rows * w))
                    .collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (g, &w) in grads.iter_mut().zip(&widths) {
                        g.extend_from_slice(&go[off..off + w]);
                        off += w;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        ))
    }

    /// Columns `[start, start+len)` of a 2-D matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        check_rank("slice_cols", 2, self.shape(x).len())?;
        let (rows, cols) = (self.shape(x)[0], self.shape(x)[1]);
        if start + len > cols {
            return Err(Error::Shape {
                op: "slice_cols",
                dim: "columns",
                expected: cols,
                got: start + len,
            });
        }
        let data = (0..rows)
            .flat_map(|r| {
                self.value(x).data()[r * cols + start..r * cols + start + len]
                    .iter()
                    .copied()
            })
            .collect();
        let value = Tensor::new(&[rows, len], data)?;
        Ok(self.push_op(
            "slice_cols",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let mut g = vec![T::zero(); rows * cols];
                for r in 0..rows {
                    g[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&go[r * len..(r + 1) * len]);
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Rows of an `N×D` matrix at the given indices.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        check_rank("gather_rows", 2, self.shape(x).len())?;
        let (n, d) = (self.shape(x)[0], self.shape(x)[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(
                "gather_rows",
                alloc::format!("row {bad} out of {n}"),
            ));
        }
        let idx = indices.to_vec();
        let data = idx
            .iter()
            .flat_map(|&i| self.value(x).data()[i * d..(i + 1) * d].iter().copied())
            .collect();
        let value = Tensor::new(&[idx.len(), d], data)?;
        Ok(self.push_op(
            "gather_rows",
            &[x],
            value,
            FnBackward(move |_: &BackwardCtx<'_, T>, go: &[T]| {
                let mut g = vec![T::zero(); n * d];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..d {
                        g[i * d + j] = g[i * d + j] + go[k * d + j];
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Builds an `N×D` token matrix: row `visible[k]` is row `k` of `rows`,
    /// every row listed in `masked` is a copy of `fill` (length `D`).
    pub fn scatter_rows(
        &mut self,
        rows: Var,
        fill: Var,
        visible: &[usize],
        masked: &[usize],
    ) -> Result<Var> {
        check_rank("scatter_rows", 2, self.shape(rows).len())?;
        let d = self.shape(rows)[1];
        check_dim(
            "scatter_rows",
            "visible rows",
            visible.len(),
            self.shape(rows)[0],
        )?;
        check_dim("scatter_rows", "fill length", d, self.value(fill).numel())?;
        let n = visible.len() + masked.len();
        let mut seen = vec![false; n];
        for &i in visible.iter().chain(masked) {
            if i >= n || seen[i] {
                return Err(Error::invalid(
                    "scatter_rows",
                    "indices are not a partition of the rows",
                ));
            }
            seen[i] = true;
        }
        let mut data = vec![T::zero(); n * d];
        for (k, &i) in visible.iter().enumerate() {
            data[i * d..(i + 1) * d].copy_from_slice(&self.value(rows).data()[k * d..(k + 1) * d]);
        }
        for &i in masked {
            data[i * d..(i + 1) * d].copy_from_slice(self.value(fill).data());
        }
        let value = Tensor::new(&[n, d], data)?;
        let (vis, msk) = (visible.to_vec(), masked.to_vec());
        Ok(self.push_op(
            "scatter_rows",
            &[rows, fill],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let gr = ctx.needs_grad(0).then(|| {
                    vis.iter()
                        .flat_map(|&i| go[i * d..(i + 1) * d].iter().copied())
                        .collect()
                });
                let gf = ctx.needs_grad(1).then(|| {
                    let mut g = vec![T::zero(); d];
                    for &i in &msk {
                        g.iter_mut()
                            .zip(&go[i * d..(i + 1) * d])
                            .for_each(|(a, &b)| *a = *a + b);
                    }
                    g
                });
                vec![gr, gf]
            }),
        ))
    }
}

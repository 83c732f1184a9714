//! Parameterized layers built from graph operators.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{trunc_normal, Bindings, ParamStore};
use crate::{Graph, Scalar, Tensor, Var};

/// Standard deviation of the truncated-normal weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Hidden width multiplier of the transformer feed-forward sub-layer.
pub const MLP_RATIO: usize = 4;

pub fn init_linear<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    d_out: usize,
    d_in: usize,
    rng: &mut R,
) {
    store.param(
        &format!("{name}.weight"),
        trunc_normal(&[d_out, d_in], INIT_STD, rng),
    );
    store.param(&format!("{name}.bias"), Tensor::zeros(&[d_out]));
}

pub fn init_layer_norm<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) {
    store.param(&format!("{name}.gamma"), Tensor::ones(&[d]));
    store.param(&format!("{name}.beta"), Tensor::zeros(&[d]));
}

pub fn init_conv<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
    bias: bool,
    rng: &mut R,
) {
    store.param(
        &format!("{name}.weight"),
        trunc_normal(&[c_out, c_in, k, k], INIT_STD, rng),
    );
    if bias {
        store.param(&format!("{name}.bias"), Tensor::zeros(&[c_out]));
    }
}

pub fn init_batch_norm<T: Scalar>(store: &mut ParamStore<T>, name: &str, c: usize) {
    store.param(&format!("{name}.gamma"), Tensor::ones(&[c]));
    store.param(&format!("{name}.beta"), Tensor::zeros(&[c]));
    store.buffer(&format!("{name}.running_mean"), Tensor::zeros(&[c]));
    store.buffer(&format!("{name}.running_var"), Tensor::ones(&[c]));
}

pub fn init_attention_block<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    d: usize,
    rng: &mut R,
) {
    init_layer_norm(store, &format!("{prefix}.ln1"), d);
    for proj in ["q", "k", "v", "proj"] {
        init_linear(store, &format!("{prefix}.{proj}"), d, d, rng);
    }
    init_layer_norm(store, &format!("{prefix}.ln2"), d);
    init_linear(store, &format!("{prefix}.fc1"), MLP_RATIO * d, d, rng);
    init_linear(store, &format!("{prefix}.fc2"), d, MLP_RATIO * d, rng);
}

pub fn linear<T: Scalar>(g: &mut Graph<T>, p: &Bindings<'_, T>, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"))?;
    let b = p.var(&format!("{name}.bias"))?;
    g.linear(x, w, Some(b))
}

pub fn layer_norm<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    name: &str,
    x: Var,
) -> Result<Var> {
    let gamma = p.var(&format!("{name}.gamma"))?;
    let beta = p.var(&format!("{name}.beta"))?;
    g.layer_norm(x, gamma, beta)
}

pub fn conv<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    name: &str,
    x: Var,
    padding: usize,
) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"))?;
    let b = p.var(&format!("{name}.bias")).ok();
    g.conv2d(x, w, b, 1, padding)
}

/// Batch normalization; in training graphs the observed statistics are
/// logged on the bindings under `name`.
pub fn batch_norm<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    name: &str,
    x: Var,
) -> Result<Var> {
    let gamma = p.var(&format!("{name}.gamma"))?;
    let beta = p.var(&format!("{name}.beta"))?;
    let rm = p.buffer(&format!("{name}.running_mean"))?;
    let rv = p.buffer(&format!("{name}.running_var"))?;
    let (y, stats) = g.batch_norm_2d(x, gamma, beta, rm.data(), rv.data())?;
    if let Some(s) = stats {
        p.record_stats(name, s);
    }
    Ok(y)
}

/// Multi-head scaled dot-product self-attention (no residual). Returns the
/// projected output and the per-head attention matrices.
pub fn self_attention<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    x: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let d = g.shape(x)[1];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::invalid(
            "attention_block",
            format!("width {d} is not divisible by {heads} heads"),
        ));
    }
    let dh = d / heads;
    let q = linear(g, p, &format!("{prefix}.q"), x)?;
    let k = linear(g, p, &format!("{prefix}.k"), x)?;
    let v = linear(g, p, &format!("{prefix}.v"), x)?;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let a = g.softmax_rows(scores)?;
        outs.push(g.matmul(a, vh)?);
        attn.push(a);
    }
    let merged = if heads == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)?
    };
    let out = linear(g, p, &format!("{prefix}.proj"), merged)?;
    Ok((out, attn))
}

/// Pre-norm transformer block over `tokens: N×D`:
/// `x + attn(ln1(x))`, then `+ fc2(gelu(fc1(ln2(·))))`.
pub fn attention_block<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    tokens: Var,
    heads: usize,
) -> Result<Var> {
    let h = layer_norm(g, p, &format!("{prefix}.ln1"), tokens)?;
    let (a, _) = self_attention(g, p, prefix, h, heads)?;
    let x = g.add(tokens, a)?;
    let h = layer_norm(g, p, &format!("{prefix}.ln2"), x)?;
    let h = linear(g, p, &format!("{prefix}.fc1"), h)?;
    let h = g.gelu(h);
    let h = linear(g, p, &format!("{prefix}.fc2"), h)?;
    g.add(x, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_indivisible_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        init_attention_block(&mut store, "blk", 6, &mut rng);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::ones(&[2, 6]));
        assert!(attention_block(&mut g, &p, "blk", x, 4).is_err());
    }
}

//! Water-conditioned adaptive perceptor.
//!
//! A global 6-dim descriptor `g` is mapped by a small MLP to three Cholesky
//! parameters, giving a lower-triangular `L` with positive diagonal and the
//! SPD metric `G = L·Lᵀ + ε·I`. The nominal `k×k` sampling grid of a
//! convolution is warped by `Δp′ = (Lᵀ)⁻¹·Δp`, so every warped step has
//! metric length `√(Δp′ᵀ·L·Lᵀ·Δp′) = ‖Δp‖₂`: the receptive field stretches
//! along directions where the metric is small. A fixed Laplacian high-pass of
//! the warped features is added back through a per-channel sigmoid gate
//! conditioned on `g`:
//!
//! `f_out = f_warped + σ(MLP([proj(GAP(f_hp)), g])) ⊙ f_hp`.
//!
//! Offsets and coordinates are `(row, column)` pairs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::{BackwardCtx, FnBackward};
use crate::error::{check_dim, check_rank, Error, Result};
use crate::nn::{self, INIT_STD};
use crate::ops::{sigmoid_scalar, softplus_scalar as softplus};
use crate::params::{trunc_normal, Bindings, ParamStore};
use crate::{Graph, Scalar, Tensor, Var};

/// Width of the global descriptor.
pub const DESCRIPTOR_DIM: usize = 6;
/// Hidden width of the descriptor → Cholesky-parameter MLP.
pub const METRIC_HIDDEN: usize = 16;
/// Width the pooled high-pass features are projected to before being joined
/// with the descriptor (32 + 6 inputs to the gate MLP).
pub const GATE_POOL_DIM: usize = 32;
/// Hidden width of the gate MLP.
pub const GATE_HIDDEN: usize = 32;
/// Floor added to the softplus-activated Cholesky diagonal.
pub const CHOLESKY_FLOOR: f64 = 1e-3;
/// Default metric regularizer ε.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Fixed Laplacian kernel of the high-pass branch.
pub const LAPLACIAN: [f64; 9] = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcapConfig {
    /// Feature channels (input and output).
    pub channels: usize,
    /// Nominal kernel size of the warped convolution.
    pub kernel: usize,
    pub epsilon: f64,
}

impl WcapConfig {
    pub fn new(channels: usize) -> Self {
        WcapConfig {
            channels,
            kernel: 3,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Snapshot of the metric built for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState<T> {
    pub descriptor: Vec<T>,
    /// `(ℓ11_raw, ℓ21, ℓ22_raw)`.
    pub chol_params: [T; 3],
    /// Row-major lower-triangular factor.
    pub factor: [[T; 2]; 2],
    /// Row-major SPD metric.
    pub metric: [[T; 2]; 2],
    pub epsilon: T,
}

impl<T: Scalar> MetricState<T> {
    /// Factor and metric from raw Cholesky parameters.
    pub fn from_chol_params(descriptor: Vec<T>, raw: [T; 3], epsilon: T) -> Self {
        let factor = factor_from_raw(raw);
        MetricState {
            descriptor,
            chol_params: raw,
            factor,
            metric: metric_from_factor(factor, epsilon),
            epsilon,
        }
    }

    /// Closed-form eigenvalues of the metric, ascending. Computed as
    /// `ε + λ(L·Lᵀ)` with the small one taken as `det(L)²/λ_max` so that it
    /// keeps full relative precision when `L` is nearly singular.
    pub fn eigenvalues(&self) -> (T, T) {
        let l = self.factor;
        let gram = metric_from_factor(l, T::zero());
        let (_, hi) = symmetric_eigenvalues(gram);
        let det = l[0][0] * l[1][1];
        let lo = if hi > T::zero() {
            det * det / hi
        } else {
            T::zero()
        };
        (self.epsilon + lo, self.epsilon + hi)
    }
}

/// `L = [[softplus(r0)+δ, 0], [r1, softplus(r2)+δ]]`.
pub fn factor_from_raw<T: Scalar>(raw: [T; 3]) -> [[T; 2]; 2] {
    let floor = T::of(CHOLESKY_FLOOR);
    [
        [softplus(raw[0]) + floor, T::zero()],
        [raw[1], softplus(raw[2]) + floor],
    ]
}

/// `G = L·Lᵀ + ε·I`.
pub fn metric_from_factor<T: Scalar>(l: [[T; 2]; 2], epsilon: T) -> [[T; 2]; 2] {
    let g00 = l[0][0] * l[0][0] + l[0][1] * l[0][1] + epsilon;
    let g01 = l[0][0] * l[1][0] + l[0][1] * l[1][1];
    let g11 = l[1][0] * l[1][0] + l[1][1] * l[1][1] + epsilon;
    [[g00, g01], [g01, g11]]
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(m: [[T; 2]; 2]) -> (T, T) {
    let half = T::of(0.5);
    let mean = (m[0][0] + m[1][1]) * half;
    let diff = (m[0][0] - m[1][1]) * half;
    let r = (diff * diff + m[0][1] * m[1][0]).sqrt();
    (mean - r, mean + r)
}

/// Metric length `√(Δpᵀ·G·Δp)` of an offset.
pub fn metric_distance<T: Scalar>(dp: [T; 2], g: [[T; 2]; 2]) -> T {
    let q =
        dp[0] * (g[0][0] * dp[0] + g[0][1] * dp[1]) + dp[1] * (g[1][0] * dp[0] + g[1][1] * dp[1]);
    q.max(T::zero()).sqrt()
}

/// The nominal and warped offsets of a `k×k` sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleField<T> {
    /// Integer `(dy, dx)` offsets of the centered grid, row-major.
    pub base_offsets: Vec<[i32; 2]>,
    pub warped_offsets: Vec<[T; 2]>,
}

impl<T: Scalar> SampleField<T> {
    pub fn kernel_taps(&self) -> usize {
        self.base_offsets.len()
    }

    /// Offsets as a `K×2` tensor.
    pub fn offsets_tensor(&self) -> Tensor<T> {
        let data = self
            .warped_offsets
            .iter()
            .flat_map(|o| [o[0], o[1]])
            .collect();
        Tensor::new(&[self.warped_offsets.len(), 2], data).expect("K×2")
    }
}

/// Row-major offsets of a centered `k×k` grid.
pub fn base_offsets(k: usize) -> Vec<[i32; 2]> {
    let r = (k / 2) as i32;
    (0..k * k)
        .map(|i| [(i / k) as i32 - r, (i % k) as i32 - r])
        .collect()
}

/// `(Lᵀ)⁻¹·Δp` for lower-triangular `L`.
pub fn warp_offset<T: Scalar>(l: [[T; 2]; 2], dp: [T; 2]) -> [T; 2] {
    let (a, c, d) = (l[0][0], l[1][0], l[1][1]);
    [dp[0] / a - c * dp[1] / (a * d), dp[1] / d]
}

/// Warped sampling field of a `k×k` grid under factor `L`.
pub fn warp_offsets<T: Scalar>(l: [[T; 2]; 2], k: usize) -> Result<SampleField<T>> {
    if k.is_multiple_of(2) || k == 0 {
        return Err(Error::invalid("warp_offsets", "kernel size must be odd"));
    }
    if !(l[0][0] != T::zero() && l[1][1] != T::zero()) {
        return Err(Error::invalid("warp_offsets", "singular Cholesky factor"));
    }
    let base = base_offsets(k);
    let warped = base
        .iter()
        .map(|o| warp_offset(l, [T::of(o[0] as f64), T::of(o[1] as f64)]))
        .collect();
    Ok(SampleField {
        base_offsets: base,
        warped_offsets: warped,
    })
}

impl<T: Scalar> Graph<T> {
    /// Raw parameters `(ℓ11_raw, ℓ21, ℓ22_raw)` → row-major `L` (4 values).
    pub fn cholesky_factor(&mut self, raw: Var) -> Result<Var> {
        check_dim(
            "cholesky_factor",
            "parameter count",
            3,
            self.value(raw).numel(),
        )?;
        let r = self.value(raw).data();
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "build_metric" });
        }
        let l = factor_from_raw([r[0], r[1], r[2]]);
        let value = Tensor::new(&[2, 2], vec![l[0][0], l[0][1], l[1][0], l[1][1]])?;
        Ok(self.push_op(
            "cholesky_factor",
            &[raw],
            value,
            FnBackward(|ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let r = ctx.input(0).data();
                let s = sigmoid_scalar;
                vec![Some(vec![go[0] * s(r[0]), go[2], go[3] * s(r[2])])]
            }),
        ))
    }

    /// Row-major `L` (2×2) → `G = L·Lᵀ + ε·I`.
    pub fn metric_from_factor(&mut self, factor: Var, epsilon: T) -> Result<Var> {
        check_dim(
            "metric_from_factor",
            "factor size",
            4,
            self.value(factor).numel(),
        )?;
        let f = self.value(factor).data();
        let m = metric_from_factor([[f[0], f[1]], [f[2], f[3]]], epsilon);
        let value = Tensor::new(&[2, 2], vec![m[0][0], m[0][1], m[1][0], m[1][1]])?;
        Ok(self.push_op(
            "metric_from_factor",
            &[factor],
            value,
            FnBackward(|ctx: &BackwardCtx<'_, T>, go: &[T]| {
                // G = L Lᵀ  ⇒  dL = (dG + dGᵀ) L
                let l = ctx.input(0).data();
                let s = [go[0] + go[0], go[1] + go[2], go[2] + go[1], go[3] + go[3]];
                vec![Some(vec![
                    s[0] * l[0] + s[1] * l[2],
                    s[0] * l[1] + s[1] * l[3],
                    s[2] * l[0] + s[3] * l[2],
                    s[2] * l[1] + s[3] * l[3],
                ])]
            }),
        ))
    }

    /// Row-major lower-triangular `L` → warped `k²×2` offsets `(Lᵀ)⁻¹·Δp`.
    pub fn warp_offsets(&mut self, factor: Var, k: usize) -> Result<Var> {
        check_dim("warp_offsets", "factor size", 4, self.value(factor).numel())?;
        let f = self.value(factor).data();
        let l = [[f[0], f[1]], [f[2], f[3]]];
        let field = warp_offsets(l, k)?;
        let base = field.base_offsets.clone();
        let value = field.offsets_tensor();
        Ok(self.push_op(
            "warp_offsets",
            &[factor],
            value,
            FnBackward(move |ctx: &BackwardCtx<'_, T>, go: &[T]| {
                let f = ctx.input(0).data();
                let (a, c, d) = (f[0], f[2], f[3]);
                let mut g = vec![T::zero(); 4];
                for (t, o) in base.iter().enumerate() {
                    let (u, v) = (T::of(o[0] as f64), T::of(o[1] as f64));
                    let (ga, gb) = (go[2 * t], go[2 * t + 1]);
                    let first = u / a - c * v / (a * d);
                    // first = u/a − c·v/(a·d), second = v/d
                    g[0] = g[0] + ga * (-first / a);
                    g[2] = g[2] + ga * (-v / (a * d));
                    g[3] = g[3] + ga * (c * v / (a * d * d)) + gb * (-v / (d * d));
                }
                vec![Some(g)]
            }),
        ))
    }
}

/// Parameters of the WCAP block under `prefix`. `latent_dim` is the width of
/// the token matrix the descriptor is pooled from.
pub fn init_wcap<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    cfg: &WcapConfig,
    latent_dim: usize,
    rng: &mut R,
) {
    let c = cfg.channels;
    nn::init_linear(
        store,
        &format!("{prefix}.descriptor"),
        DESCRIPTOR_DIM,
        latent_dim,
        rng,
    );
    nn::init_linear(
        store,
        &format!("{prefix}.metric.fc1"),
        METRIC_HIDDEN,
        DESCRIPTOR_DIM,
        rng,
    );
    store.param(
        &format!("{prefix}.metric.fc2.weight"),
        trunc_normal(&[3, METRIC_HIDDEN], INIT_STD, rng),
    );
    // start from L = I
    let unit = T::of(inverse_softplus(1.0 - CHOLESKY_FLOOR));
    store.param(
        &format!("{prefix}.metric.fc2.bias"),
        Tensor::new(&[3], vec![unit, T::zero(), unit]).expect("3"),
    );
    store.param(
        &format!("{prefix}.warp.weight"),
        trunc_normal(&[c, c, cfg.kernel, cfg.kernel], INIT_STD, rng),
    );
    nn::init_linear(store, &format!("{prefix}.gate.proj"), GATE_POOL_DIM, c, rng);
    nn::init_linear(
        store,
        &format!("{prefix}.gate.fc1"),
        GATE_HIDDEN,
        GATE_POOL_DIM + DESCRIPTOR_DIM,
        rng,
    );
    nn::init_linear(store, &format!("{prefix}.gate.fc2"), c, GATE_HIDDEN, rng);
}

/// `ln(eᵞ − 1)`.
pub fn inverse_softplus(y: f64) -> f64 {
    num_traits::Float::ln(num_traits::Float::exp_m1(y))
}

/// Mean over tokens followed by a learned map to the 6-dim descriptor.
pub fn project_descriptor<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    latent: Var,
) -> Result<Var> {
    let pooled = g.mean_rows(latent)?;
    let d = g.value(pooled).numel();
    let row = g.reshape(pooled, &[1, d])?;
    let out = nn::linear(g, p, &format!("{prefix}.descriptor"), row)?;
    g.reshape(out, &[DESCRIPTOR_DIM])
}

/// Graph handles of a metric built from a descriptor.
#[derive(Debug, Clone, Copy)]
pub struct MetricVars {
    pub chol_params: Var,
    pub factor: Var,
    pub metric: Var,
}

impl MetricVars {
    pub fn snapshot<T: Scalar>(&self, g: &Graph<T>, descriptor: Var, epsilon: T) -> MetricState<T> {
        let r = g.value(self.chol_params).data();
        MetricState::from_chol_params(
            g.value(descriptor).data().to_vec(),
            [r[0], r[1], r[2]],
            epsilon,
        )
    }
}

/// Descriptor → MLP(6→16→3, ReLU) → Cholesky factor → SPD metric.
pub fn build_metric<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    descriptor: Var,
    epsilon: f64,
) -> Result<MetricVars> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("build_metric", "epsilon must be positive"));
    }
    check_dim(
        "build_metric",
        "descriptor width",
        DESCRIPTOR_DIM,
        g.value(descriptor).numel(),
    )?;
    let x = g.reshape(descriptor, &[1, DESCRIPTOR_DIM])?;
    let h = nn::linear(g, p, &format!("{prefix}.metric.fc1"), x)?;
    let h = g.relu(h);
    let raw = nn::linear(g, p, &format!("{prefix}.metric.fc2"), h)?;
    let chol_params = g.reshape(raw, &[3])?;
    let factor = g.cholesky_factor(chol_params)?;
    let metric = g.metric_from_factor(factor, T::of(epsilon))?;
    Ok(MetricVars {
        chol_params,
        factor,
        metric,
    })
}

/// `out(p) = Σ_t W_t · bilinear(f_in, p + Δp′_t)` for `f_in: C×H×W`,
/// `weight: C′×C×k×k` and `offsets: k²×2` (row-major over the kernel).
pub fn warped_conv<T: Scalar>(
    g: &mut Graph<T>,
    f_in: Var,
    weight: Var,
    offsets: Var,
) -> Result<Var> {
    check_rank("warped_conv", 3, g.shape(f_in).len())?;
    check_rank("warped_conv", 4, g.shape(weight).len())?;
    let (c, h, w) = (g.shape(f_in)[0], g.shape(f_in)[1], g.shape(f_in)[2]);
    let ws = g.shape(weight).to_vec();
    check_dim("warped_conv", "weight input channels", c, ws[1])?;
    let taps = ws[2] * ws[3];
    check_dim("warped_conv", "field arity", taps, g.shape(offsets)[0])?;
    let coords = g.shift_grid(offsets, h, w)?;
    let samples = g.bilinear_sample(f_in, coords)?;
    let cols = g.reshape(samples, &[c * taps, h * w])?;
    let wm = g.reshape(weight, &[ws[0], c * taps])?;
    let out = g.matmul(wm, cols)?;
    g.reshape(out, &[ws[0], h, w])
}

/// Depthwise convolution with the fixed Laplacian kernel, zero padding.
pub fn laplacian_highpass<T: Scalar>(g: &mut Graph<T>, f: Var) -> Result<Var> {
    check_rank("laplacian_highpass", 3, g.shape(f).len())?;
    let c = g.shape(f)[0];
    let kernel = g.constant(Tensor::from_fn(&[c, 3, 3], |i| T::of(LAPLACIAN[i % 9])));
    g.depthwise_conv2d(f, kernel, 1)
}

/// Per-channel gate in `(0, 1)` from pooled high-pass features and `g`.
pub fn freq_gate<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    f_hp: Var,
    descriptor: Var,
) -> Result<Var> {
    let c = g.shape(f_hp)[0];
    let pooled = g.global_avg_pool(f_hp)?;
    let pooled = g.reshape(pooled, &[1, c])?;
    let proj = nn::linear(g, p, &format!("{prefix}.gate.proj"), pooled)?;
    let desc = g.reshape(descriptor, &[1, DESCRIPTOR_DIM])?;
    let joined = g.concat_cols(&[proj, desc])?;
    let h = nn::linear(g, p, &format!("{prefix}.gate.fc1"), joined)?;
    let h = g.relu(h);
    let logits = nn::linear(g, p, &format!("{prefix}.gate.fc2"), h)?;
    let gate = g.sigmoid(logits);
    g.reshape(gate, &[c])
}

/// Intermediate handles of one WCAP evaluation.
#[derive(Debug, Clone, Copy)]
pub struct WcapOutput {
    pub metric: MetricVars,
    pub offsets: Var,
    pub warped: Var,
    pub highpass: Var,
    pub gate: Var,
    pub out: Var,
}

/// `f_out = f_warped + gate ⊙ laplacian(f_warped)`.
pub fn wcap_forward<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    cfg: &WcapConfig,
    f_in: Var,
    descriptor: Var,
) -> Result<WcapOutput> {
    check_dim("wcap_forward", "channels", cfg.channels, g.shape(f_in)[0])?;
    let metric = build_metric(g, p, prefix, descriptor, cfg.epsilon)?;
    let offsets = g.warp_offsets(metric.factor, cfg.kernel)?;
    let weight = p.var(&format!("{prefix}.warp.weight"))?;
    let warped = warped_conv(g, f_in, weight, offsets)?;
    let highpass = laplacian_highpass(g, warped)?;
    let gate = freq_gate(g, p, prefix, highpass, descriptor)?;
    let gated = g.mul_channels(highpass, gate)?;
    let out = g.add(warped, gated)?;
    Ok(WcapOutput {
        metric,
        offsets,
        warped,
        highpass,
        gate,
        out,
    })
}

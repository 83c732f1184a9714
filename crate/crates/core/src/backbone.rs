//! Asymmetric masked autoencoder with a segmentation path.
//!
//! One encoder pass over the visible patch tokens feeds two heads: a light
//! transformer decoder that reconstructs every patch, and the segmentation
//! path, which re-inserts a learned mask token at masked positions, lays the
//! tokens out on their patch grid, passes them through the bridge (WCAP or a
//! plain 3×3 convolution), projects to the refinement width with a 1×1
//! convolution and decodes with ATRM (or plain upsampling stages).

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atrm::{self, AtrmConfig};
use crate::error::{check_dim, check_rank, Error, Result};
use crate::nn;
use crate::params::{trunc_normal, Bindings, ParamStore};
use crate::wcap::{self, WcapConfig, WcapOutput};
use crate::{Graph, Scalar, Tensor, Var};

/// Which of the two proposed modules a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    Baseline,
    WcapOnly,
    AtrmOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::WcapOnly,
        Variant::AtrmOnly,
        Variant::Full,
    ];

    pub fn uses_wcap(self) -> bool {
        matches!(self, Variant::Full | Variant::WcapOnly)
    }

    pub fn uses_atrm(self) -> bool {
        matches!(self, Variant::Full | Variant::AtrmOnly)
    }

    /// Configuration-file spelling.
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Baseline => "baseline",
            Variant::WcapOnly => "wcap_only",
            Variant::AtrmOnly => "atrm_only",
        }
    }

    /// Row label of an ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Ours",
            Variant::Baseline => "B",
            Variant::WcapOnly => "B+WCAP",
            Variant::AtrmOnly => "B+ATRM",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub in_channels: usize,
    pub enc_dim: usize,
    pub enc_depth: usize,
    pub enc_heads: usize,
    pub dec_dim: usize,
    pub dec_depth: usize,
    pub dec_heads: usize,
    pub mask_ratio: f64,
    pub wcap_kernel: usize,
    pub wcap_epsilon: f64,
    /// Width the bridged token grid is projected to before refinement.
    pub bridge_channels: usize,
    pub atrm_channels: Vec<usize>,
    pub atrm_kernel: usize,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn toy() -> Self {
        ModelConfig {
            image_size: 96,
            patch_size: 8,
            in_channels: 3,
            enc_dim: 64,
            enc_depth: 2,
            enc_heads: 4,
            dec_dim: 48,
            dec_depth: 1,
            dec_heads: 4,
            mask_ratio: 0.05,
            wcap_kernel: 3,
            wcap_epsilon: wcap::DEFAULT_EPSILON,
            bridge_channels: 64,
            atrm_channels: AtrmConfig::toy().channels_per_stage,
            atrm_kernel: atrm::DEFAULT_KERNEL_LENGTH,
            variant: Variant::Full,
        }
    }

    pub fn paper() -> Self {
        ModelConfig {
            image_size: 384,
            patch_size: 16,
            in_channels: 3,
            enc_dim: 768,
            enc_depth: 12,
            enc_heads: 12,
            dec_dim: 512,
            dec_depth: 8,
            dec_heads: 16,
            mask_ratio: 0.05,
            wcap_kernel: 3,
            wcap_epsilon: wcap::DEFAULT_EPSILON,
            bridge_channels: 64,
            atrm_channels: AtrmConfig::paper().channels_per_stage,
            atrm_kernel: atrm::DEFAULT_KERNEL_LENGTH,
            variant: Variant::Full,
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.in_channels * self.patch_size * self.patch_size
    }

    pub fn atrm_config(&self) -> AtrmConfig {
        AtrmConfig {
            in_channels: self.bridge_channels,
            channels_per_stage: self.atrm_channels.clone(),
            kernel_length: self.atrm_kernel,
            directional: self.variant.uses_atrm(),
        }
    }

    pub fn wcap_config(&self) -> WcapConfig {
        WcapConfig {
            channels: self.enc_dim,
            kernel: self.wcap_kernel,
            epsilon: self.wcap_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::invalid("model_config", msg));
        if self.patch_size == 0
            || self.image_size == 0
            || !self.image_size.is_multiple_of(self.patch_size)
        {
            return bad(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.enc_heads == 0 || !self.enc_dim.is_multiple_of(self.enc_heads) {
            return bad(format!(
                "encoder width {} is not divisible by {} heads",
                self.enc_dim, self.enc_heads
            ));
        }
        if self.dec_heads == 0 || !self.dec_dim.is_multiple_of(self.dec_heads) {
            return bad(format!(
                "decoder width {} is not divisible by {} heads",
                self.dec_dim, self.dec_heads
            ));
        }
        if !self.enc_dim.is_multiple_of(4) || !self.dec_dim.is_multiple_of(4) {
            return bad("position embeddings need widths divisible by 4".into());
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return bad(format!("mask ratio {} outside [0, 1)", self.mask_ratio));
        }
        if self.wcap_kernel.is_multiple_of(2) || !(self.wcap_epsilon > 0.0) {
            return bad("WCAP kernel must be odd and epsilon positive".into());
        }
        self.atrm_config().validate()?;
        if self.atrm_config().output_side(self.grid()) != self.image_size {
            return bad(format!(
                "{} refinement stages from a {}-token grid do not reach {} pixels",
                self.atrm_channels.len(),
                self.grid(),
                self.image_size
            ));
        }
        Ok(())
    }
}

/// Partition of the token indices into visible and masked sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
    pub seed: u64,
}

impl MaskPlan {
    /// Every token visible.
    pub fn none(n_tokens: usize) -> Self {
        MaskPlan {
            visible: (0..n_tokens).collect(),
            masked: Vec::new(),
            seed: 0,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.visible.len() + self.masked.len()
    }
}

/// Number of masked tokens: `ratio·n` rounded half away from zero.
pub fn masked_count(n_tokens: usize, ratio: f64) -> usize {
    Float::round(ratio * n_tokens as f64) as usize
}

/// Uniformly samples `round(ratio·n)` masked tokens without replacement.
/// Both index lists are sorted.
pub fn random_mask(n_tokens: usize, ratio: f64, seed: u64) -> Result<MaskPlan> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::invalid(
            "random_mask",
            format!("ratio {ratio} outside [0, 1)"),
        ));
    }
    let k = masked_count(n_tokens, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = sample(&mut rng, n_tokens, k).into_vec();
    masked.sort_unstable();
    let mut is_masked = alloc::vec![false; n_tokens];
    masked.iter().for_each(|&i| is_masked[i] = true);
    let visible = (0..n_tokens).filter(|&i| !is_masked[i]).collect();
    Ok(MaskPlan {
        visible,
        masked,
        seed,
    })
}

/// Fixed 2-D sinusoidal embeddings for a `grid×grid` token layout, `N×dim`.
/// The first half of each row encodes the token row, the second half its
/// column; each half is `[sin(pos·ω_k), cos(pos·ω_k)]` with
/// `ω_k = 10000^(−k/(dim/4))`.
pub fn sinusoidal_pos_embed<T: Scalar>(grid: usize, dim: usize) -> Tensor<T> {
    let quarter = dim / 4;
    Tensor::from_fn(&[grid * grid, dim], |idx| {
        let (t, j) = (idx / dim, idx % dim);
        let pos = if j < 2 * quarter { t / grid } else { t % grid } as f64;
        let j = j % (2 * quarter);
        let k = j % quarter;
        let omega = Float::powf(10000.0f64, -(k as f64) / quarter as f64);
        T::of(if j < quarter {
            Float::sin(pos * omega)
        } else {
            Float::cos(pos * omega)
        })
    })
}

fn rows_of<T: Scalar>(t: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let d = t.shape()[1];
    let data = rows
        .iter()
        .flat_map(|&r| t.data()[r * d..(r + 1) * d].iter().copied())
        .collect();
    Tensor::new(&[rows.len(), d], data).expect("rows")
}

/// Registers every parameter of the configured model.
pub fn init_model<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    cfg.validate()?;
    let (d, dd, pd) = (cfg.enc_dim, cfg.dec_dim, cfg.patch_dim());
    nn::init_linear(store, "enc.patch_embed", d, pd, rng);
    for i in 0..cfg.enc_depth {
        nn::init_attention_block(store, &format!("enc.block{i}"), d, rng);
    }
    nn::init_layer_norm(store, "enc.norm", d);

    nn::init_linear(store, "dec.embed", dd, d, rng);
    store.param("dec.mask_token", trunc_normal(&[dd], nn::INIT_STD, rng));
    for i in 0..cfg.dec_depth {
        nn::init_attention_block(store, &format!("dec.block{i}"), dd, rng);
    }
    nn::init_layer_norm(store, "dec.norm", dd);
    nn::init_linear(store, "dec.head", pd, dd, rng);

    store.param("seg.mask_token", trunc_normal(&[d], nn::INIT_STD, rng));
    if cfg.variant.uses_wcap() {
        wcap::init_wcap(store, "wcap", &cfg.wcap_config(), d, rng);
    } else {
        nn::init_conv(store, "bridge.conv", d, d, 3, true, rng);
    }
    nn::init_conv(store, "seg.proj", cfg.bridge_channels, d, 1, true, rng);
    atrm::init_atrm(store, "atrm", &cfg.atrm_config(), rng)
}

/// Patch embedding plus position embedding plus encoder blocks over the
/// visible tokens: `N_vis×enc_dim`.
pub fn encode<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    cfg: &ModelConfig,
    image: Var,
    plan: &MaskPlan,
) -> Result<Var> {
    check_rank("encode", 3, g.shape(image).len())?;
    check_dim("encode", "token count", cfg.tokens(), plan.n_tokens())?;
    let tokens = g.patchify(image, cfg.patch_size)?;
    let visible = g.gather_rows(tokens, &plan.visible)?;
    let x = nn::linear(g, p, "enc.patch_embed", visible)?;
    let pos = g.constant(rows_of(
        &sinusoidal_pos_embed(cfg.grid(), cfg.enc_dim),
        &plan.visible,
    ));
    let mut x = g.add(x, pos)?;
    for i in 0..cfg.enc_depth {
        x = nn::attention_block(g, p, &format!("enc.block{i}"), x, cfg.enc_heads)?;
    }
    nn::layer_norm(g, p, "enc.norm", x)
}

/// Reconstruction decoder: mask tokens at masked positions, position
/// embeddings, decoder blocks, linear head to patch pixels, unpatchify.
pub fn decode_recon<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    cfg: &ModelConfig,
    latents: Var,
    plan: &MaskPlan,
) -> Result<Var> {
    let x = nn::linear(g, p, "dec.embed", latents)?;
    let fill = p.var("dec.mask_token")?;
    let x = g.scatter_rows(x, fill, &plan.visible, &plan.masked)?;
    let pos = g.constant(sinusoidal_pos_embed(cfg.grid(), cfg.dec_dim));
    let mut x = g.add(x, pos)?;
    for i in 0..cfg.dec_depth {
        x = nn::attention_block(g, p, &format!("dec.block{i}"), x, cfg.dec_heads)?;
    }
    let x = nn::layer_norm(g, p, "dec.norm", x)?;
    let patches = nn::linear(g, p, "dec.head", x)?;
    g.unpatchify(
        patches,
        cfg.in_channels,
        cfg.image_size,
        cfg.image_size,
        cfg.patch_size,
    )
}

/// Segmentation logits `1×H×W` from encoder latents.
pub fn seg_head<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    cfg: &ModelConfig,
    latents: Var,
    plan: &MaskPlan,
) -> Result<(Var, Option<WcapOutput>)> {
    let (d, s) = (cfg.enc_dim, cfg.grid());
    let fill = p.var("seg.mask_token")?;
    let full = g.scatter_rows(latents, fill, &plan.visible, &plan.masked)?;
    let channels_first = g.transpose(full)?;
    let f_in = g.reshape(channels_first, &[d, s, s])?;
    let (bridged, wcap_out) = if cfg.variant.uses_wcap() {
        let descriptor = wcap::project_descriptor(g, p, "wcap", latents)?;
        let out = wcap::wcap_forward(g, p, "wcap", &cfg.wcap_config(), f_in, descriptor)?;
        (out.out, Some(out))
    } else {
        (nn::conv(g, p, "bridge.conv", f_in, 1)?, None)
    };
    let f_dec = nn::conv(g, p, "seg.proj", bridged, 0)?;
    let logits = atrm::atrm_forward(g, p, "atrm", &cfg.atrm_config(), f_dec)?;
    Ok((logits, wcap_out))
}

/// Handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub latents: Var,
    pub recon: Option<Var>,
    pub logits: Var,
    pub wcap: Option<WcapOutput>,
}

/// Shared encoder pass feeding both heads; the reconstruction head is only
/// evaluated when `with_recon` is set.
pub fn forward<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    cfg: &ModelConfig,
    image: Var,
    plan: &MaskPlan,
    with_recon: bool,
) -> Result<ForwardOutput> {
    let latents = encode(g, p, cfg, image, plan)?;
    let recon = if with_recon {
        Some(decode_recon(g, p, cfg, latents, plan)?)
    } else {
        None
    };
    let (logits, wcap) = seg_head(g, p, cfg, latents, plan)?;
    Ok(ForwardOutput {
        latents,
        recon,
        logits,
        wcap,
    })
}

/// Segmentation logits. Training graphs mask tokens according to `plan`;
/// evaluation graphs see every token.
pub fn seg_forward<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    cfg: &ModelConfig,
    image: Var,
    plan: Option<&MaskPlan>,
) -> Result<Var> {
    let all = MaskPlan::none(cfg.tokens());
    let plan = match plan {
        Some(plan) if g.is_training() => plan,
        _ => &all,
    };
    let latents = encode(g, p, cfg, image, plan)?;
    Ok(seg_head(g, p, cfg, latents, plan)?.0)
}

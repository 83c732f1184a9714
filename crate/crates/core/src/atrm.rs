//! Abyssal-topology refinement module.
//!
//! Progressive ×2 upsampling stages (bilinear upsample, 3×3 convolution,
//! batch normalization, ReLU), each followed by an anisotropic structural
//! block: eight hard-masked directional depthwise filters whose responses are
//! fused back to `C` channels by a 1×1 convolution and added to the input.
//!
//! Orientation `a` is the angle `a·45°`, measured counter-clockwise from the
//! +column axis. Its unit lattice step in `(row, column)` is
//! `(−round(sin θ), round(cos θ))`, so 0° steps right, 90° steps up and 225°
//! steps down-left. The support of a directional kernel of length `L` is the
//! center cell plus `⌊L/2⌋` cells along that half-line.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_dim, check_rank, Error, Result};
use crate::nn;
use crate::ops::Tap;
use crate::params::{Bindings, ParamStore};
use crate::{Graph, Scalar, Tensor, Var};

/// Number of orientations in a bank.
pub const ANGLES: usize = 8;
/// Default directional kernel length.
pub const DEFAULT_KERNEL_LENGTH: usize = 5;

/// Unit lattice step `(dy, dx)` of orientation `a`.
pub fn direction_step(a: usize) -> (isize, isize) {
    const STEPS: [(isize, isize); ANGLES] = [
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];
    STEPS[a % ANGLES]
}

/// Orientation of slot `a` in degrees.
pub fn angle_degrees(a: usize) -> u32 {
    (a % ANGLES) as u32 * 45
}

/// Support taps of orientation `a`, ordered from the center outwards.
pub fn support_taps(a: usize, length: usize) -> Vec<Tap> {
    let (sy, sx) = direction_step(a);
    let r = (length / 2) as isize;
    (0..=r)
        .map(|m| {
            let (dy, dx) = (m * sy, m * sx);
            Tap {
                dy,
                dx,
                index: ((dy + r) * length as isize + dx + r) as usize,
            }
        })
        .collect()
}

/// Binary `length×length` support mask of orientation `a`, row-major.
pub fn support_mask(a: usize, length: usize) -> Vec<bool> {
    let mut mask = vec![false; length * length];
    for t in support_taps(a, length) {
        mask[t.index] = true;
    }
    mask
}

fn check_length(length: usize) -> Result<()> {
    if length.is_multiple_of(2) || length < 3 {
        return Err(Error::invalid(
            "make_direction_kernels",
            format!("kernel length {length} must be odd and at least 3"),
        ));
    }
    Ok(())
}

/// Eight depthwise directional kernel sets, each `C×L×L`, zero off support.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalKernelBank<T> {
    pub length: usize,
    pub channels: usize,
    pub kernels: Vec<Tensor<T>>,
}

impl<T: Scalar> DirectionalKernelBank<T> {
    /// Bank with every support cell set to `1 / support size`.
    pub fn new(length: usize, channels: usize) -> Result<Self> {
        check_length(length)?;
        let value = T::one() / T::of((length / 2 + 1) as f64);
        let kernels = (0..ANGLES)
            .map(|a| {
                let mask = support_mask(a, length);
                Tensor::from_fn(&[channels, length, length], |i| {
                    if mask[i % (length * length)] {
                        value
                    } else {
                        T::zero()
                    }
                })
            })
            .collect();
        Ok(DirectionalKernelBank {
            length,
            channels,
            kernels,
        })
    }

    pub fn angles(&self) -> [u32; ANGLES] {
        core::array::from_fn(angle_degrees)
    }

    pub fn support_masks(&self) -> Vec<Vec<bool>> {
        (0..ANGLES).map(|a| support_mask(a, self.length)).collect()
    }

    /// Zeroes every off-support cell.
    pub fn apply_masks(&mut self) {
        for (a, k) in self.kernels.iter_mut().enumerate() {
            mask_kernel(k, a, self.length);
        }
    }

    /// Bank whose slot `a + 2` carries the weights of slot `a`, laid along the
    /// rotated support in the same center-outwards order. Pairs with a 90°
    /// counter-clockwise rotation of the input.
    pub fn rotated_90(&self) -> Self {
        let l2 = self.length * self.length;
        let mut kernels = vec![Tensor::zeros(&[self.channels, self.length, self.length]); ANGLES];
        for a in 0..ANGLES {
            let b = (a + 2) % ANGLES;
            let (from, to) = (support_taps(a, self.length), support_taps(b, self.length));
            let src = self.kernels[a].data();
            let dst = kernels[b].data_mut();
            for c in 0..self.channels {
                for (s, d) in from.iter().zip(&to) {
                    dst[c * l2 + d.index] = src[c * l2 + s.index];
                }
            }
        }
        DirectionalKernelBank {
            length: self.length,
            channels: self.channels,
            kernels,
        }
    }
}

/// `make_direction_kernels(length, channels)`.
pub fn make_direction_kernels<T: Scalar>(
    length: usize,
    channels: usize,
) -> Result<DirectionalKernelBank<T>> {
    DirectionalKernelBank::new(length, channels)
}

fn mask_kernel<T: Scalar>(k: &mut Tensor<T>, a: usize, length: usize) {
    let mask = support_mask(a, length);
    let l2 = length * length;
    for (i, v) in k.data_mut().iter_mut().enumerate() {
        if !mask[i % l2] {
            *v = T::zero();
        }
    }
}

/// Fusion weight (`C×8C×1×1`) matching [`DirectionalKernelBank::rotated_90`]:
/// input-channel block `a` moves to block `a + 2`.
pub fn rotate_fusion_90<T: Scalar>(fusion: &Tensor<T>) -> Tensor<T> {
    let c = fusion.shape()[0];
    let cols = fusion.shape()[1];
    let block = cols / ANGLES;
    let src = fusion.data();
    let mut out = fusion.clone();
    let dst = out.data_mut();
    for o in 0..c {
        for a in 0..ANGLES {
            let b = (a + 2) % ANGLES;
            for i in 0..block {
                dst[o * cols + b * block + i] = src[o * cols + a * block + i];
            }
        }
    }
    out
}

/// 90° counter-clockwise rotation of every channel of a square `C×S×S`
/// tensor: `out[c, i, j] = x[c, j, S−1−i]`.
pub fn rot90<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape()[1];
    assert_eq!(s, x.shape()[2], "rot90 needs square planes");
    let src = x.data();
    Tensor::from_fn(x.shape(), |idx| {
        let ch = idx / (s * s);
        let (i, j) = ((idx / s) % s, idx % s);
        src[ch * s * s + j * s + (s - 1 - i)]
    })
}

/// The eight directional responses of `f`, each `C×H×W`.
pub fn directional_responses<T: Scalar>(
    g: &mut Graph<T>,
    f: Var,
    kernels: &[Var],
) -> Result<Vec<Var>> {
    check_dim("astb_forward", "orientation count", ANGLES, kernels.len())?;
    kernels
        .iter()
        .enumerate()
        .map(|(a, &k)| {
            check_rank("astb_forward", 3, g.shape(k).len())?;
            let length = g.shape(k)[1];
            check_length(length)?;
            g.tap_conv(f, k, &support_taps(a, length), "directional_conv")
        })
        .collect()
}

/// `f + fusion(concat_a dir_a(f))` with `fusion: C×8C×1×1`.
pub fn astb_forward<T: Scalar>(
    g: &mut Graph<T>,
    f: Var,
    kernels: &[Var],
    fusion: Var,
) -> Result<Var> {
    check_rank("astb_forward", 3, g.shape(f).len())?;
    let c = g.shape(f)[0];
    let fs = g.shape(fusion).to_vec();
    if fs.len() != 4 || fs[0] != c || fs[1] != ANGLES * c || fs[2] != 1 || fs[3] != 1 {
        return Err(Error::invalid(
            "astb_forward",
            format!(
                "fusion weight shape {fs:?} does not match {c}×{}×1×1",
                ANGLES * c
            ),
        ));
    }
    let responses = directional_responses(g, f, kernels)?;
    let stacked = g.concat(&responses)?;
    let fused = g.conv2d(stacked, fusion, None, 1, 0)?;
    g.add(f, fused)
}

/// Evaluates a whole bank outside of any training graph.
pub fn astb_apply<T: Scalar>(
    f: &Tensor<T>,
    bank: &DirectionalKernelBank<T>,
    fusion: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut g = Graph::eval();
    let fv = g.constant(f.clone());
    let ks: Vec<Var> = bank.kernels.iter().map(|k| g.constant(k.clone())).collect();
    let fu = g.constant(fusion.clone());
    let out = astb_forward(&mut g, fv, &ks, fu)?;
    Ok(g.value(out).clone())
}

/// Widths of the refinement decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtrmConfig {
    /// Channels of the bottleneck entering the first stage.
    pub in_channels: usize,
    /// Output width of each ×2 stage. The channel flow halves from the
    /// bottleneck stage by stage and the last stage keeps its input width.
    pub channels_per_stage: Vec<usize>,
    pub kernel_length: usize,
    /// Whether each stage ends with a directional block.
    pub directional: bool,
}

impl AtrmConfig {
    pub fn toy() -> Self {
        AtrmConfig {
            in_channels: 64,
            channels_per_stage: vec![32, 16, 16],
            kernel_length: DEFAULT_KERNEL_LENGTH,
            directional: true,
        }
    }

    pub fn paper() -> Self {
        AtrmConfig {
            in_channels: 64,
            channels_per_stage: vec![32, 16, 8, 8],
            kernel_length: DEFAULT_KERNEL_LENGTH,
            directional: true,
        }
    }

    pub fn stages(&self) -> usize {
        self.channels_per_stage.len()
    }

    pub fn output_side(&self, bottleneck: usize) -> usize {
        bottleneck << self.stages()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels_per_stage.is_empty()
            || self.channels_per_stage.contains(&0)
            || self.in_channels == 0
        {
            return Err(Error::invalid(
                "atrm_forward",
                "stage widths must be positive and non-empty",
            ));
        }
        check_length(self.kernel_length)
    }
}

pub fn init_upsample_stage<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    c_in: usize,
    c_out: usize,
    rng: &mut R,
) {
    nn::init_conv(store, &format!("{prefix}.conv"), c_out, c_in, 3, false, rng);
    nn::init_batch_norm(store, &format!("{prefix}.bn"), c_out);
}

/// Directional kernels at `1/support` and a zero fusion weight, so the block
/// starts as the identity.
pub fn init_astb<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    channels: usize,
    length: usize,
) -> Result<()> {
    let bank = DirectionalKernelBank::<T>::new(length, channels)?;
    for (a, k) in bank.kernels.into_iter().enumerate() {
        store.param(&format!("{prefix}.dir{a}"), k);
    }
    store.param(
        &format!("{prefix}.fusion.weight"),
        Tensor::zeros(&[channels, ANGLES * channels, 1, 1]),
    );
    Ok(())
}

pub fn init_atrm<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    cfg: &AtrmConfig,
    rng: &mut R,
) -> Result<()> {
    cfg.validate()?;
    let mut c_in = cfg.in_channels;
    for (i, &c) in cfg.channels_per_stage.iter().enumerate() {
        init_upsample_stage(store, &format!("{prefix}.stage{i}"), c_in, c, rng);
        if cfg.directional {
            init_astb(
                store,
                &format!("{prefix}.stage{i}.astb"),
                c,
                cfg.kernel_length,
            )?;
        }
        c_in = c;
    }
    nn::init_conv(store, &format!("{prefix}.head"), 1, c_in, 1, true, rng);
    Ok(())
}

/// Zeroes off-support cells of every directional kernel under `prefix`.
pub fn enforce_support_masks<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    cfg: &AtrmConfig,
) -> Result<()> {
    if !cfg.directional {
        return Ok(());
    }
    for i in 0..cfg.stages() {
        for a in 0..ANGLES {
            let k = store.get_mut(&format!("{prefix}.stage{i}.astb.dir{a}"))?;
            mask_kernel(k, a, cfg.kernel_length);
        }
    }
    Ok(())
}

/// Bilinear ×2 upsample, 3×3 convolution, batch normalization, ReLU.
pub fn upsample_stage<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    f: Var,
) -> Result<Var> {
    let up = g.upsample_x2(f)?;
    let h = nn::conv(g, p, &format!("{prefix}.conv"), up, 1)?;
    let h = nn::batch_norm(g, p, &format!("{prefix}.bn"), h)?;
    Ok(g.relu(h))
}

/// Directional block with parameters bound under `prefix`.
pub fn astb<T: Scalar>(g: &mut Graph<T>, p: &Bindings<'_, T>, prefix: &str, f: Var) -> Result<Var> {
    let kernels = (0..ANGLES)
        .map(|a| p.var(&format!("{prefix}.dir{a}")))
        .collect::<Result<Vec<_>>>()?;
    let fusion = p.var(&format!("{prefix}.fusion.weight"))?;
    astb_forward(g, f, &kernels, fusion)
}

/// `f_dec: C×S×S` → logits `1×(2^stages·S)×(2^stages·S)`.
pub fn atrm_forward<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bindings<'_, T>,
    prefix: &str,
    cfg: &AtrmConfig,
    f_dec: Var,
) -> Result<Var> {
    cfg.validate()?;
    check_rank("atrm_forward", 3, g.shape(f_dec).len())?;
    check_dim(
        "atrm_forward",
        "bottleneck channels",
        cfg.in_channels,
        g.shape(f_dec)[0],
    )?;
    let mut f = f_dec;
    for i in 0..cfg.stages() {
        f = upsample_stage(g, p, &format!("{prefix}.stage{i}"), f)?;
        if cfg.directional {
            f = astb(g, p, &format!("{prefix}.stage{i}.astb"), f)?;
        }
    }
    nn::conv(g, p, &format!("{prefix}.head"), f, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offsets(a: usize) -> Vec<(isize, isize)> {
        support_taps(a, 5).iter().map(|t| (t.dy, t.dx)).collect()
    }

    #[test]
    fn axis_and_diagonal_supports() {
        assert_eq!(offsets(0), vec![(0, 0), (0, 1), (0, 2)]);
        assert_eq!(offsets(5), vec![(0, 0), (1, -1), (2, -2)]);
        assert_eq!(angle_degrees(5), 225);
    }

    #[test]
    fn masks_have_three_cells_and_differ() {
        let masks: Vec<Vec<bool>> = (0..ANGLES).map(|a| support_mask(a, 5)).collect();
        for (a, m) in masks.iter().enumerate() {
            assert_eq!(m.iter().filter(|&&b| b).count(), 3);
            for other in &masks[a + 1..] {
                assert_ne!(m, other);
            }
        }
    }

    #[test]
    fn even_length_rejected() {
        assert!(make_direction_kernels::<f64>(4, 2).is_err());
        assert!(make_direction_kernels::<f64>(1, 2).is_err());
    }

    #[test]
    fn rot90_moves_right_to_up() {
        let x = Tensor::from_fn(&[1, 3, 3], |i| i as f64);
        let r = rot90(&x);
        // the last column becomes the first row
        assert_eq!(&r.data()[0..3], &[2.0, 5.0, 8.0]);
    }

    #[test]
    fn toy_and_paper_sides() {
        assert_eq!(AtrmConfig::toy().output_side(12), 96);
        assert_eq!(AtrmConfig::paper().output_side(24), 384);
    }
}

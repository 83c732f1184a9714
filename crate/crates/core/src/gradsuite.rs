//! Registry of finite-difference gradient checks covering every
//! differentiable operator, the composite blocks, the losses and a tiny
//! end-to-end model.
//!
//! Each case draws its inputs from a seeded stream and reduces the operator
//! output with a fixed random weighting (magnitudes in `[0.5, 1.5]`, random
//! signs), so no output element has a structurally vanishing gradient.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atrm::{self, AtrmConfig, ANGLES};
use crate::backbone::{self, MaskPlan, ModelConfig, Variant};
use crate::error::Result;
use crate::gradcheck::{GradCheck, GradCheckReport};
use crate::losses::{self, LossWeights};
use crate::nn;
use crate::ops::Tap;
use crate::params::{Bindings, ParamStore};
use crate::wcap::{self, WcapConfig};
use crate::{Graph, Tensor, Var};

/// A case fails when its worst relative error reaches this value.
pub const SUITE_TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const SUITE_STEP: f64 = 1e-5;
/// Elements sampled per parameter tensor in the composite cases.
pub const SAMPLED_ELEMENTS: usize = 6;
/// Composite cases (blocks with parameter stores and the end-to-end model)
/// skip elements whose analytic gradient is below this fraction of the
/// largest one. At step 1e-5 their central differences carry an absolute
/// error of roughly 1e-10 that would dominate such elements.
pub const RESOLUTION_FLOOR: f64 = 1e-5;

type CheckFn = fn(u64) -> Result<GradCheckReport>;

/// One registered check.
#[derive(Clone, Copy)]
pub struct SuiteCase {
    pub name: &'static str,
    check: CheckFn,
}

impl SuiteCase {
    pub fn run(&self, seed: u64) -> Result<GradCheckReport> {
        (self.check)(seed)
    }
}

/// Worst report of one case over several seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: &'static str,
    pub seeds: usize,
    pub worst: GradCheckReport,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.worst.max_rel_err < SUITE_TOLERANCE
    }
}

/// Runs `case` for seeds `0..seeds` and keeps the worst report.
pub fn run_case(case: &SuiteCase, seeds: u64) -> Result<CaseResult> {
    let mut worst: Option<GradCheckReport> = None;
    for seed in 0..seeds.max(1) {
        let r = case.run(seed)?;
        if worst
            .as_ref()
            .is_none_or(|w| !(r.max_rel_err <= w.max_rel_err))
        {
            worst = Some(r);
        }
    }
    Ok(CaseResult {
        name: case.name,
        seeds: seeds.max(1) as usize,
        worst: worst.expect("at least one seed"),
    })
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(salt);
    r
}

fn uniform(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

fn signed(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v = r.random_range(lo..hi);
        if r.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

/// Values at least 0.1 away from every integer, within `±span`.
fn off_lattice(r: &mut ChaCha8Rng, shape: &[usize], span: i64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        r.random_range(-span..span) as f64 + r.random_range(0.1..0.9)
    })
}

/// Weighted sum of `y` with weights drawn from `seed`.
fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut r = rng(seed, 0xfeed);
    let w = signed(&mut r, g.shape(y), 0.5, 1.5);
    g.weighted_sum(y, &w)
}

fn composite() -> GradCheck {
    GradCheck::new(SUITE_STEP)
        .resolution_floor(RESOLUTION_FLOOR)
        .smoothness_check(SUITE_TOLERANCE)
}

fn check<F>(seed: u64, inputs: Vec<Tensor<f64>>, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    check_with(GradCheck::new(SUITE_STEP), seed, inputs, f)
}

fn check_with<F>(
    gc: GradCheck,
    seed: u64,
    inputs: Vec<Tensor<f64>>,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    gc.run(
        |g, v| {
            let y = f(g, v)?;
            probe(g, y, seed)
        },
        &inputs,
    )
}

/// Adds `U(−s, s)` to every trainable entry so no parameter sits at a
/// symmetric or zero initialization.
fn jitter(store: &mut ParamStore<f64>, r: &mut ChaCha8Rng, s: f64) {
    for e in store.entries_mut() {
        if e.kind == crate::params::Kind::Param {
            e.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v += r.random_range(-s..s));
        }
    }
}

/// Attention key biases shift every score of a row equally, so their
/// gradient is identically zero and a central difference returns roundoff.
fn held_constant(name: &str) -> bool {
    name.ends_with(".k.bias")
}

fn trainable(store: &ParamStore<f64>) -> Vec<Tensor<f64>> {
    store
        .trainable()
        .filter(|e| !held_constant(&e.name))
        .map(|e| e.value.clone())
        .collect()
}

/// Binds the checked inputs `v` (in [`trainable`] order) plus constants for
/// the entries held fixed.
fn bind<'a>(
    g: &mut Graph<f64>,
    store: &'a ParamStore<f64>,
    v: &[Var],
) -> Result<Bindings<'a, f64>> {
    let mut next = v.iter();
    let vars: Vec<Var> = store
        .trainable()
        .map(|e| {
            if held_constant(&e.name) {
                g.constant(e.value.clone())
            } else {
                *next.next().expect("one input per checked entry")
            }
        })
        .collect();
    store.bind_vars(&vars)
}

fn binary(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| if r.random::<f64>() < 0.3 { 1.0 } else { 0.0 })
}

fn elementwise_pair(
    seed: u64,
    op: fn(&mut Graph<f64>, Var, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut r = rng(seed, 1);
    let a = uniform(&mut r, &[2, 3, 4], -1.0, 1.0);
    let b = signed(&mut r, &[2, 3, 4], 0.5, 1.5);
    check(seed, vec![a, b], |g, v| op(g, v[0], v[1]))
}

fn unary(
    seed: u64,
    lo: f64,
    hi: f64,
    op: fn(&mut Graph<f64>, Var) -> Var,
) -> Result<GradCheckReport> {
    let mut r = rng(seed, 2);
    let x = signed(&mut r, &[3, 5], lo, hi);
    check(seed, vec![x], |g, v| Ok(op(g, v[0])))
}

fn case_e2e(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_model_config();
    let mut r = rng(seed, 40);
    let mut store = ParamStore::new();
    backbone::init_model(&mut store, &cfg, &mut r)?;
    jitter(&mut store, &mut r, 0.2);
    let image = uniform(&mut r, &[3, cfg.image_size, cfg.image_size], 0.0, 1.0);
    let mask = binary(&mut r, &[cfg.image_size, cfg.image_size]);
    let plan = backbone::random_mask(cfg.tokens(), cfg.mask_ratio, seed)?;
    let mut inputs = vec![image.clone()];
    inputs.extend(trainable(&store));
    let weights = LossWeights::default();
    let wm = losses::dynamic_weight(&mask, &weights)?;
    composite().sampled(SAMPLED_ELEMENTS, seed).run(
        |g, v| {
            let p = bind(g, &store, &v[1..])?;
            let out = backbone::forward(g, &p, &cfg, v[0], &plan, true)?;
            let rec = losses::recon_loss(
                g,
                out.recon.expect("requested"),
                &image,
                &plan,
                cfg.patch_size,
            )?;
            let seg = losses::seg_loss(g, out.logits, &mask, &wm)?;
            losses::total_loss_var(g, seg.total, rec, 0.1)
        },
        &inputs,
    )
}

/// The smallest configuration exercising every block: 16×16 images, a 4×4
/// token grid and two refinement stages.
pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        image_size: 16,
        patch_size: 4,
        in_channels: 3,
        enc_dim: 8,
        enc_depth: 1,
        enc_heads: 2,
        dec_dim: 8,
        dec_depth: 1,
        dec_heads: 2,
        mask_ratio: 0.25,
        wcap_kernel: 3,
        wcap_epsilon: wcap::DEFAULT_EPSILON,
        bridge_channels: 4,
        atrm_channels: vec![4, 4],
        atrm_kernel: 3,
        variant: Variant::Full,
    }
}

fn wcap_store(seed: u64, c: usize, latent: usize) -> (ParamStore<f64>, WcapConfig, ChaCha8Rng) {
    let mut r = rng(seed, 30);
    let cfg = WcapConfig::new(c);
    let mut store = ParamStore::new();
    wcap::init_wcap(&mut store, "wcap", &cfg, latent, &mut r);
    jitter(&mut store, &mut r, 0.1);
    (store, cfg, r)
}

fn factor(r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::new(
        &[2, 2],
        vec![
            r.random_range(0.5..1.5),
            0.0,
            r.random_range(-0.5..0.5),
            r.random_range(0.5..1.5),
        ],
    )
    .expect("4")
}

/// Every registered case.
pub fn cases() -> Vec<SuiteCase> {
    macro_rules! case {
        ($name:expr, $f:expr) => {
            SuiteCase {
                name: $name,
                check: $f,
            }
        };
    }
    vec![
        case!("add", |s| elementwise_pair(s, |g, a, b| g.add(a, b))),
        case!("sub", |s| elementwise_pair(s, |g, a, b| g.sub(a, b))),
        case!("mul", |s| elementwise_pair(s, |g, a, b| g.mul(a, b))),
        case!("div", |s| elementwise_pair(s, |g, a, b| g.div(a, b))),
        case!("scale", |s| unary(s, 0.0, 2.0, |g, x| {
            let y = g.scale(x, -0.7);
            g.add_scalar(y, 0.3)
        })),
        case!("relu", |s| unary(s, 0.05, 2.0, |g, x| g.relu(x))),
        case!("sigmoid", |s| unary(s, 0.0, 3.0, |g, x| g.sigmoid(x))),
        case!("softplus", |s| unary(s, 0.0, 3.0, |g, x| g.softplus(x))),
        case!("gelu", |s| unary(s, 0.0, 3.0, |g, x| g.gelu(x))),
        case!("mul_channels", |s| {
            let mut r = rng(s, 3);
            let x = uniform(&mut r, &[3, 4, 5], -1.0, 1.0);
            let gate = uniform(&mut r, &[3], 0.1, 0.9);
            check(s, vec![x, gate], |g, v| g.mul_channels(v[0], v[1]))
        }),
        case!("add_row", |s| {
            let mut r = rng(s, 4);
            let x = uniform(&mut r, &[4, 5], -1.0, 1.0);
            let row = uniform(&mut r, &[5], -1.0, 1.0);
            check(s, vec![x, row], |g, v| g.add_row(v[0], v[1]))
        }),
        case!("linear", |s| {
            let mut r = rng(s, 5);
            let x = uniform(&mut r, &[4, 5], -1.0, 1.0);
            let w = uniform(&mut r, &[3, 5], -1.0, 1.0);
            let b = uniform(&mut r, &[3], -1.0, 1.0);
            check(s, vec![x, w, b], |g, v| g.linear(v[0], v[1], Some(v[2])))
        }),
        case!("matmul", |s| {
            let mut r = rng(s, 6);
            let a = uniform(&mut r, &[3, 4], -1.0, 1.0);
            let b = uniform(&mut r, &[4, 5], -1.0, 1.0);
            check(s, vec![a, b], |g, v| g.matmul(v[0], v[1]))
        }),
        case!("matmul_nt", |s| {
            let mut r = rng(s, 7);
            let a = uniform(&mut r, &[3, 4], -1.0, 1.0);
            let b = uniform(&mut r, &[5, 4], -1.0, 1.0);
            check(s, vec![a, b], |g, v| g.matmul_nt(v[0], v[1]))
        }),
        case!("transpose", |s| {
            let mut r = rng(s, 8);
            check(s, vec![uniform(&mut r, &[3, 4], -1.0, 1.0)], |g, v| {
                g.transpose(v[0])
            })
        }),
        case!("softmax_rows", |s| {
            let mut r = rng(s, 9);
            check(s, vec![uniform(&mut r, &[3, 5], -2.0, 2.0)], |g, v| {
                g.softmax_rows(v[0])
            })
        }),
        case!("layer_norm", |s| {
            let mut r = rng(s, 10);
            let x = uniform(&mut r, &[4, 6], -1.0, 1.0);
            let gamma = uniform(&mut r, &[6], 0.5, 1.5);
            let beta = uniform(&mut r, &[6], -0.5, 0.5);
            check(s, vec![x, gamma, beta], |g, v| {
                g.layer_norm(v[0], v[1], v[2])
            })
        }),
        case!("batch_norm_2d_train", |s| {
            let mut r = rng(s, 11);
            let x = uniform(&mut r, &[3, 4, 4], -1.0, 1.0);
            let gamma = uniform(&mut r, &[3], 0.5, 1.5);
            let beta = uniform(&mut r, &[3], -0.5, 0.5);
            check(s, vec![x, gamma, beta], |g, v| {
                Ok(g.batch_norm_2d(v[0], v[1], v[2], &[0.0; 3], &[1.0; 3])?.0)
            })
        }),
        case!("batch_norm_2d_eval", |s| {
            let mut r = rng(s, 12);
            let x = uniform(&mut r, &[3, 4, 4], -1.0, 1.0);
            let gamma = uniform(&mut r, &[3], 0.5, 1.5);
            let beta = uniform(&mut r, &[3], -0.5, 0.5);
            let mean: Vec<f64> = (0..3).map(|_| r.random_range(-0.5..0.5)).collect();
            let var: Vec<f64> = (0..3).map(|_| r.random_range(0.5..2.0)).collect();
            check_with(
                GradCheck::new(SUITE_STEP).eval_mode(),
                s,
                vec![x, gamma, beta],
                move |g, v| Ok(g.batch_norm_2d(v[0], v[1], v[2], &mean, &var)?.0),
            )
        }),
        case!("sum", |s| {
            let mut r = rng(s, 13);
            check(s, vec![uniform(&mut r, &[2, 3], -1.0, 1.0)], |g, v| {
                Ok(g.sum(v[0]))
            })
        }),
        case!("mean", |s| {
            let mut r = rng(s, 14);
            check(s, vec![uniform(&mut r, &[2, 3], -1.0, 1.0)], |g, v| {
                g.mean(v[0])
            })
        }),
        case!("mean_rows", |s| {
            let mut r = rng(s, 15);
            check(s, vec![uniform(&mut r, &[4, 5], -1.0, 1.0)], |g, v| {
                g.mean_rows(v[0])
            })
        }),
        case!("global_avg_pool", |s| {
            let mut r = rng(s, 16);
            check(s, vec![uniform(&mut r, &[3, 4, 5], -1.0, 1.0)], |g, v| {
                g.global_avg_pool(v[0])
            })
        }),
        case!("bilinear_sample", |s| {
            let mut r = rng(s, 17);
            let x = uniform(&mut r, &[2, 5, 6], -1.0, 1.0);
            let coords = Tensor::from_fn(&[9, 2], |i| {
                r.random_range(-1..[5, 6][i % 2]) as f64 + r.random_range(0.1..0.9)
            });
            check(s, vec![x, coords], |g, v| g.bilinear_sample(v[0], v[1]))
        }),
        case!("shift_grid", |s| {
            let mut r = rng(s, 18);
            check(s, vec![off_lattice(&mut r, &[3, 2], 2)], |g, v| {
                g.shift_grid(v[0], 3, 4)
            })
        }),
        case!("upsample_x2", |s| {
            let mut r = rng(s, 19);
            check(s, vec![uniform(&mut r, &[2, 3, 4], -1.0, 1.0)], |g, v| {
                g.upsample_x2(v[0])
            })
        }),
        case!("reshape", |s| {
            let mut r = rng(s, 20);
            check(s, vec![uniform(&mut r, &[2, 6], -1.0, 1.0)], |g, v| {
                g.reshape(v[0], &[3, 4])
            })
        }),
        case!("permute_elements", |s| {
            let mut r = rng(s, 21);
            let perm = vec![5, 3, 1, 0, 2, 4];
            check(s, vec![uniform(&mut r, &[2, 3], -1.0, 1.0)], move |g, v| {
                g.permute_elements(v[0], perm.clone(), &[3, 2])
            })
        }),
        case!("patchify", |s| {
            let mut r = rng(s, 22);
            check(s, vec![uniform(&mut r, &[3, 8, 8], -1.0, 1.0)], |g, v| {
                g.patchify(v[0], 4)
            })
        }),
        case!("unpatchify", |s| {
            let mut r = rng(s, 23);
            check(s, vec![uniform(&mut r, &[4, 48], -1.0, 1.0)], |g, v| {
                g.unpatchify(v[0], 3, 8, 8, 4)
            })
        }),
        case!("concat", |s| {
            let mut r = rng(s, 24);
            let a = uniform(&mut r, &[2, 3, 3], -1.0, 1.0);
            let b = uniform(&mut r, &[1, 3, 3], -1.0, 1.0);
            check(s, vec![a, b], |g, v| g.concat(&[v[0], v[1]]))
        }),
        case!("concat_cols", |s| {
            let mut r = rng(s, 25);
            let a = uniform(&mut r, &[3, 2], -1.0, 1.0);
            let b = uniform(&mut r, &[3, 4], -1.0, 1.0);
            check(s, vec![a, b], |g, v| g.concat_cols(&[v[0], v[1]]))
        }),
        case!("slice_cols", |s| {
            let mut r = rng(s, 26);
            check(s, vec![uniform(&mut r, &[3, 5], -1.0, 1.0)], |g, v| {
                g.slice_cols(v[0], 1, 3)
            })
        }),
        case!("gather_rows", |s| {
            let mut r = rng(s, 27);
            check(s, vec![uniform(&mut r, &[5, 3], -1.0, 1.0)], |g, v| {
                g.gather_rows(v[0], &[4, 0, 2])
            })
        }),
        case!("scatter_rows", |s| {
            let mut r = rng(s, 28);
            let rows = uniform(&mut r, &[3, 4], -1.0, 1.0);
            let fill = uniform(&mut r, &[4], -1.0, 1.0);
            check(s, vec![rows, fill], |g, v| {
                g.scatter_rows(v[0], v[1], &[0, 2, 4], &[1, 3])
            })
        }),
        case!("conv2d", |s| {
            let mut r = rng(s, 29);
            let x = uniform(&mut r, &[2, 5, 5], -1.0, 1.0);
            let w = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
            let b = uniform(&mut r, &[3], -1.0, 1.0);
            check(s, vec![x, w, b], |g, v| {
                g.conv2d(v[0], v[1], Some(v[2]), 1, 1)
            })
        }),
        case!("conv2d_strided", |s| {
            let mut r = rng(s, 31);
            let x = uniform(&mut r, &[2, 6, 6], -1.0, 1.0);
            let w = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
            check(s, vec![x, w], |g, v| g.conv2d(v[0], v[1], None, 2, 1))
        }),
        case!("depthwise_conv2d", |s| {
            let mut r = rng(s, 32);
            let x = uniform(&mut r, &[3, 5, 5], -1.0, 1.0);
            let w = uniform(&mut r, &[3, 3, 3], -1.0, 1.0);
            check(s, vec![x, w], |g, v| g.depthwise_conv2d(v[0], v[1], 1))
        }),
        case!("tap_conv", |s| {
            let mut r = rng(s, 33);
            let x = uniform(&mut r, &[2, 6, 6], -1.0, 1.0);
            let w = uniform(&mut r, &[2, 5, 5], -1.0, 1.0);
            let taps: Vec<Tap> = atrm::support_taps(1, 5);
            check(s, vec![x, w], move |g, v| {
                g.tap_conv(v[0], v[1], &taps, "tap_conv")
            })
        }),
        case!("attention_block", |s| {
            let mut r = rng(s, 34);
            let mut store = ParamStore::new();
            nn::init_attention_block(&mut store, "blk", 8, &mut r);
            jitter(&mut store, &mut r, 0.3);
            let mut inputs = vec![uniform(&mut r, &[5, 8], -1.0, 1.0)];
            inputs.extend(trainable(&store));
            check_with(composite(), s, inputs, |g, v| {
                let p = bind(g, &store, &v[1..])?;
                nn::attention_block(g, &p, "blk", v[0], 2)
            })
        }),
        case!("cholesky_factor", |s| {
            let mut r = rng(s, 35);
            check(s, vec![uniform(&mut r, &[3], -2.0, 2.0)], |g, v| {
                g.cholesky_factor(v[0])
            })
        }),
        case!("metric_from_factor", |s| {
            let mut r = rng(s, 36);
            check(s, vec![factor(&mut r)], |g, v| {
                g.metric_from_factor(v[0], 1e-4)
            })
        }),
        case!("warp_offsets", |s| {
            let mut r = rng(s, 37);
            check(s, vec![factor(&mut r)], |g, v| g.warp_offsets(v[0], 3))
        }),
        case!("warped_conv", |s| {
            let mut r = rng(s, 38);
            let x = uniform(&mut r, &[2, 5, 5], -1.0, 1.0);
            let w = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
            let offsets = off_lattice(&mut r, &[9, 2], 2);
            check(s, vec![x, w, offsets], |g, v| {
                wcap::warped_conv(g, v[0], v[1], v[2])
            })
        }),
        case!("laplacian_highpass", |s| {
            let mut r = rng(s, 39);
            check(s, vec![uniform(&mut r, &[2, 4, 4], -1.0, 1.0)], |g, v| {
                wcap::laplacian_highpass(g, v[0])
            })
        }),
        case!("freq_gate", |s| {
            let (store, _, mut r) = wcap_store(s, 4, 8);
            let mut inputs = vec![
                uniform(&mut r, &[4, 5, 5], -1.0, 1.0),
                uniform(&mut r, &[6], -1.0, 1.0),
            ];
            inputs.extend(trainable(&store));
            check_with(composite(), s, inputs, |g, v| {
                let p = bind(g, &store, &v[2..])?;
                wcap::freq_gate(g, &p, "wcap", v[0], v[1])
            })
        }),
        case!("wcap_forward", |s| {
            let (store, cfg, mut r) = wcap_store(s, 4, 8);
            let mut inputs = vec![
                uniform(&mut r, &[4, 5, 5], -1.0, 1.0),
                uniform(&mut r, &[6, 8], -1.0, 1.0),
            ];
            inputs.extend(trainable(&store));
            check_with(composite(), s, inputs, move |g, v| {
                let p = bind(g, &store, &v[2..])?;
                let desc = wcap::project_descriptor(g, &p, "wcap", v[1])?;
                Ok(wcap::wcap_forward(g, &p, "wcap", &cfg, v[0], desc)?.out)
            })
        }),
        case!("astb", |s| {
            let mut r = rng(s, 41);
            let mut bank = atrm::DirectionalKernelBank::<f64>::new(5, 3)?;
            bank.kernels.iter_mut().for_each(|k| {
                k.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = r.random_range(-1.0..1.0))
            });
            bank.apply_masks();
            let mut inputs = vec![
                uniform(&mut r, &[3, 6, 6], -1.0, 1.0),
                uniform(&mut r, &[3, 3 * ANGLES, 1, 1], -0.5, 0.5),
            ];
            inputs.extend(bank.kernels);
            check(s, inputs, |g, v| atrm::astb_forward(g, v[0], &v[2..], v[1]))
        }),
        case!("atrm_forward", |s| {
            let mut r = rng(s, 42);
            let cfg = AtrmConfig {
                in_channels: 4,
                channels_per_stage: vec![4, 3],
                kernel_length: 3,
                directional: true,
            };
            let mut store = ParamStore::new();
            atrm::init_atrm(&mut store, "atrm", &cfg, &mut r)?;
            jitter(&mut store, &mut r, 0.3);
            let mut inputs = vec![uniform(&mut r, &[4, 3, 3], -1.0, 1.0)];
            inputs.extend(trainable(&store));
            check_with(
                composite().sampled(4 * SAMPLED_ELEMENTS, s),
                s,
                inputs,
                move |g, v| {
                    let p = bind(g, &store, &v[1..])?;
                    atrm::atrm_forward(g, &p, "atrm", &cfg, v[0])
                },
            )
        }),
        case!("seg_loss", |s| {
            let mut r = rng(s, 43);
            let logits = uniform(&mut r, &[1, 6, 6], -2.0, 2.0);
            let gt = binary(&mut r, &[6, 6]);
            let wm = losses::dynamic_weight(&gt, &LossWeights::default())?;
            check(s, vec![logits], move |g, v| {
                Ok(losses::seg_loss(g, v[0], &gt, &wm)?.total)
            })
        }),
        case!("recon_loss", |s| {
            let mut r = rng(s, 44);
            let recon = uniform(&mut r, &[3, 8, 8], -1.0, 1.0);
            let target = uniform(&mut r, &[3, 8, 8], 0.0, 1.0);
            let plan = MaskPlan {
                visible: vec![0, 2],
                masked: vec![1, 3],
                seed: s,
            };
            check(s, vec![recon], move |g, v| {
                losses::recon_loss(g, v[0], &target, &plan, 4)
            })
        }),
        case!("total_loss", |s| {
            let mut r = rng(s, 45);
            let a = uniform(&mut r, &[1], 0.0, 2.0);
            let b = uniform(&mut r, &[1], 0.0, 2.0);
            check(s, vec![a, b], |g, v| {
                losses::total_loss_var(g, v[0], v[1], 0.1)
            })
        }),
        case!("end_to_end", case_e2e),
    ]
}

/// Runs every case over `seeds` seeds.
pub fn run_suite(seeds: u64) -> Result<Vec<CaseResult>> {
    cases().iter().map(|c| run_case(c, seeds)).collect()
}

/// Deliberately wrong gradient (`d(x²)/dx` reported as `x`), used to show that
/// the suite detects errors.
pub fn faulty_case() -> SuiteCase {
    SuiteCase {
        name: "faulty_square",
        check: |s| {
            let mut r = rng(s, 99);
            check(s, vec![signed(&mut r, &[4], 0.5, 1.5)], |g, v| {
                use crate::autograd::{BackwardCtx, FnBackward};
                let val = g.value(v[0]).map(|a| a * a);
                Ok(g.push_op(
                    "faulty_square",
                    &[v[0]],
                    val,
                    FnBackward(|ctx: &BackwardCtx<'_, f64>, go: &[f64]| {
                        vec![Some(
                            ctx.input(0)
                                .data()
                                .iter()
                                .zip(go)
                                .map(|(&a, &b)| a * b)
                                .collect(),
                        )]
                    }),
                ))
            })
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let c = cases();
        let mut names: Vec<_> = c.iter().map(|c| c.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), c.len());
    }

    #[test]
    fn faulty_case_fails() {
        assert!(!run_case(&faulty_case(), 2).unwrap().passed());
    }

    #[test]
    fn tiny_config_is_valid() {
        tiny_model_config().validate().unwrap();
        assert_eq!(format!("{:?}", tiny_model_config().variant), "Full");
    }
}

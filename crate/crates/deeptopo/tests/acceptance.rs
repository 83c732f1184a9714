//! Acceptance suite: one pass/fail line per criterion on standard output.
//!
//! The training criteria share one 300/60 toy corpus and take most of an
//! hour on a single core; they run one at a time so their timings are not
//! inflated by each other.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use deeptopo::commands::{self, GenDataOptions, SWEEP_GRID};
use deeptopo::config::{Profile, RunConfig};
use deeptopo_core::atrm::{self, DirectionalKernelBank, ANGLES};
use deeptopo_core::backbone::random_mask;
use deeptopo_core::losses;
use deeptopo_core::metrics::{self, BinaryMask};
use deeptopo_core::params::ParamStore;
use deeptopo_core::wcap::{self, WcapConfig, DEFAULT_EPSILON, DESCRIPTOR_DIM};
use deeptopo_core::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 0;
const TRAIN_COUNT: usize = 300;
const EVAL_COUNT: usize = 60;
const GRADCHECK_SEEDS: u64 = 10;
const GRADCHECK_BUDGET_S: f64 = 600.0;
const ABLATION_BUDGET_S: f64 = 1800.0;

static HEAVY: Mutex<()> = Mutex::new(());

/// Writes the verdict line outside the test harness's output capture.
fn report(criterion: u32, title: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {criterion:>2} {verdict}: {title}: {detail}").unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    dir
}

/// The shared toy corpus, generated once per test process.
fn corpus() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let out = scratch("corpus");
        commands::gen_data(&GenDataOptions {
            out: out.clone(),
            count: TRAIN_COUNT,
            eval_count: EVAL_COUNT,
            seed: SEED,
            ..GenDataOptions::default()
        })
        .unwrap();
        out
    })
}

fn toy_config(data: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::defaults(Profile::Toy);
    cfg.seed = SEED;
    cfg.data_dir = data.to_path_buf();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[test]
fn criterion_01_gradient_suite() {
    let _heavy = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let results = commands::gradcheck(GRADCHECK_SEEDS, false).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (worst_name, worst) = results
        .iter()
        .map(|r| (r.name, r.worst.max_rel_err))
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name)
        .collect();
    let pass = failed.is_empty() && worst < 1e-4 && secs < GRADCHECK_BUDGET_S;
    report(
        1,
        "gradient suite",
        pass,
        format!(
            "{} cases x {GRADCHECK_SEEDS} seeds, worst max_rel_err {worst:.2e} ({worst_name}) < 1e-4, failed {failed:?}, {secs:.0}s < {GRADCHECK_BUDGET_S}s",
            results.len()
        ),
    );
}

#[test]
fn criterion_02_metric_is_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let wide = Normal::new(0.0, 3.0).unwrap();
    let mut store = ParamStore::<f64>::new();
    wcap::init_wcap(&mut store, "w", &WcapConfig::new(2), 8, &mut rng);
    let (mut below, mut lowest) = (0usize, f64::INFINITY);
    for draw in 0..10_000 {
        if draw % 100 == 0 {
            for name in [
                "w.metric.fc1.weight",
                "w.metric.fc1.bias",
                "w.metric.fc2.weight",
                "w.metric.fc2.bias",
            ] {
                let t = store.get_mut(name).unwrap();
                *t = Tensor::from_fn(t.shape(), |_| wide.sample(&mut rng) / 3.0);
            }
        }
        let mut g = Graph::eval();
        let p = store.bind(&mut g);
        let d = g.constant(Tensor::from_fn(&[DESCRIPTOR_DIM], |_| {
            wide.sample(&mut rng)
        }));
        let m = wcap::build_metric(&mut g, &p, "w", d, DEFAULT_EPSILON).unwrap();
        let (lo, _) = m.snapshot(&g, d, DEFAULT_EPSILON).eigenvalues();
        below += usize::from(lo.is_nan() || lo < DEFAULT_EPSILON);
        lowest = lowest.min(lo);
    }
    report(
        2,
        "SPD metric",
        below == 0,
        format!(
            "10000 descriptors, {below} with lambda_min < eps, lowest lambda_min - eps = {:.3e}",
            lowest - DEFAULT_EPSILON
        ),
    );
}

#[test]
fn criterion_03_identity_metric_reduces_to_conv2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f32;
    for _ in 0..100 {
        let (c_in, c_out) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let (h, w) = (rng.random_range(3..=9), rng.random_range(3..=9));
        let k = [1, 3, 5][rng.random_range(0..3)];
        let x = Tensor::<f32>::from_fn(&[c_in, h, w], |_| rng.random_range(-1.0..1.0));
        let wt = Tensor::<f32>::from_fn(&[c_out, c_in, k, k], |_| rng.random_range(-1.0..1.0));
        let mut g = Graph::eval();
        let (xv, wv) = (g.constant(x), g.constant(wt));
        let l = g.constant(Tensor::new(&[2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap());
        let offsets = g.warp_offsets(l, k).unwrap();
        let warped = wcap::warped_conv(&mut g, xv, wv, offsets).unwrap();
        let plain = g.conv2d(xv, wv, None, 1, k / 2).unwrap();
        worst = worst.max(g.value(warped).max_abs_diff(g.value(plain)));
    }
    report(
        3,
        "identity-metric reduction",
        worst <= 1e-6,
        format!("100 cases at f32, max |warped - conv2d| = {worst:.2e} <= 1e-6"),
    );
}

#[test]
fn criterion_04_warp_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let raw = [
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ];
        let l = wcap::factor_from_raw::<f64>(raw);
        let gm = wcap::metric_from_factor(l, 0.0);
        for k in [1, 3, 5] {
            let field = wcap::warp_offsets(l, k).unwrap();
            for (base, warped) in field.base_offsets.iter().zip(&field.warped_offsets) {
                let norm = ((base[0] * base[0] + base[1] * base[1]) as f64).sqrt();
                worst = worst.max((wcap::metric_distance(*warped, gm) - norm).abs());
            }
        }
    }
    report(
        4,
        "warp isometry",
        worst <= 1e-10,
        format!("1000 factors x k in {{1,3,5}}, max |d_G - |offset|| = {worst:.2e} <= 1e-10"),
    );
}

#[test]
fn criterion_05_astb_rotation_commutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = rng.random_range(1..=3);
        let s = rng.random_range(3..=9);
        let length = [3, 5, 7][rng.random_range(0..3)];
        let f = random(&[c, s, s], &mut rng);
        let mut bank = DirectionalKernelBank::new(length, c).unwrap();
        for k in &mut bank.kernels {
            *k = random(k.shape(), &mut rng);
        }
        bank.apply_masks();
        let fusion = random(&[c, ANGLES * c, 1, 1], &mut rng);
        let turned_first = atrm::astb_apply(
            &atrm::rot90(&f),
            &bank.rotated_90(),
            &atrm::rotate_fusion_90(&fusion),
        )
        .unwrap();
        let turned_last = atrm::rot90(&atrm::astb_apply(&f, &bank, &fusion).unwrap());
        worst = worst.max(turned_first.max_abs_diff(&turned_last));
    }
    report(
        5,
        "ASTB rotation equivariance",
        worst <= 1e-12,
        format!("50 inputs at f64, max commutation error {worst:.2e} <= 1e-12"),
    );
}

#[test]
fn criterion_06_loss_endpoints_homogeneity_and_masked_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut endpoints = true;
    for _ in 0..1000 {
        let (seg, rec) = (rng.random_range(0.0..5.0f64), rng.random_range(0.0..5.0f64));
        endpoints &= losses::total_loss(seg, rec, 0.0).unwrap() == seg
            && losses::total_loss(seg, rec, 1.0).unwrap() == rec;
    }

    let s_img = 96 * 96;
    let mut homogeneity = 0.0f64;
    let mut halving = true;
    for l in [0.5, 1.0, 3.0] {
        for s_obj in 1..=s_img {
            let a = losses::object_weight(s_img, s_obj, l).unwrap();
            let want = l * s_img as f64;
            homogeneity = homogeneity.max((a * s_obj as f64 - want).abs() / want);
            if 2 * s_obj <= s_img {
                halving &= a == 2.0 * losses::object_weight(s_img, 2 * s_obj, l).unwrap();
            }
        }
    }

    let mut support = true;
    for seed in 0..20 {
        let plan = random_mask(16, 0.25, seed).unwrap();
        let masked: HashSet<usize> = losses::masked_pixels(&plan, 16, 4).into_iter().collect();
        let target = Tensor::from_fn(&[3, 16, 16], |_| rng.random_range(0.0..1.0));
        let recon = Tensor::from_fn(&[3, 16, 16], |_| rng.random_range(0.0..1.0));
        let value = |r: &Tensor<f64>| {
            let mut g = Graph::eval();
            let rv = g.constant(r.clone());
            let l = losses::recon_loss(&mut g, rv, &target, &plan, 4).unwrap();
            g.value(l).data()[0]
        };
        let mut poked = recon.clone();
        for (i, v) in poked.data_mut().iter_mut().enumerate() {
            if !masked.contains(&(i % 256)) {
                *v += rng.random_range(-10.0..10.0);
            }
        }
        support &= value(&poked) == value(&recon);
        let mut g = Graph::new();
        let r = g.param(recon.clone());
        let l = losses::recon_loss(&mut g, r, &target, &plan, 4).unwrap();
        g.backward(l).unwrap();
        support &= g
            .grad(r)
            .unwrap()
            .data()
            .iter()
            .enumerate()
            .all(|(i, &d)| masked.contains(&(i % 256)) || d == 0.0);
    }
    let pass = endpoints && homogeneity <= 2.0 * f64::EPSILON && halving && support;
    report(
        6,
        "loss endpoints, homogeneity, masked support",
        pass,
        format!(
            "endpoints exact {endpoints}, max |alpha*S_obj - l*S_img|/(l*S_img) = {homogeneity:.1e} <= 2ulp, exact halving {halving}, visible-patch invariance {support}"
        ),
    );
}

fn bits_mask(bits: u16) -> BinaryMask {
    BinaryMask::from_fn(3, 3, |r, c| bits >> (r * 3 + c) & 1 == 1)
}

/// Component count by repeated neighbor-closure over bitsets.
fn components_oracle(bits: u16) -> i64 {
    let touching =
        |i: usize, j: usize| (i / 3).abs_diff(j / 3) <= 1 && (i % 3).abs_diff(j % 3) <= 1;
    let mut left = bits;
    let mut count = 0;
    while left != 0 {
        let mut comp: u16 = 1 << left.trailing_zeros();
        loop {
            let grown = (0..9)
                .filter(|&j| {
                    bits >> j & 1 == 1 && (0..9).any(|i| comp >> i & 1 == 1 && touching(i, j))
                })
                .fold(comp, |a, j| a | 1 << j);
            if grown == comp {
                break;
            }
            comp = grown;
        }
        left &= !comp;
        count += 1;
    }
    count
}

#[test]
fn criterion_07_metric_oracles() {
    let masks: Vec<BinaryMask> = (0..512u16).map(bits_mask).collect();
    let comps: Vec<i64> = (0..512u16).map(components_oracle).collect();
    let mut mismatches = 0usize;
    for a in 0..512u16 {
        let pred = masks[a as usize].to_f64();
        for b in 0..512u16 {
            let gt = &masks[b as usize];
            let (inter, union) = ((a & b).count_ones(), (a | b).count_ones());
            let iou = if union == 0 {
                1.0
            } else {
                f64::from(inter) / f64::from(union)
            };
            mismatches += usize::from(metrics::miou(&pred, gt, 0.5).unwrap() != iou);
            mismatches += usize::from(
                metrics::cc_delta(&masks[a as usize], gt) != comps[a as usize] - comps[b as usize],
            );
        }
    }

    // Reference values from the transliteration in crates/core/tests/fixtures/metric_reference.py.
    let sq = |v: f64| v * v;
    let ellipse = BinaryMask::from_fn(12, 10, |r, c| {
        sq((r as f64 - 5.0) / 4.0) + sq((c as f64 - 4.0) / 3.0) <= 1.0
    });
    let ellipse_pred: Vec<f64> = (0..120)
        .map(|i| ((i * 37 + 11) % 101) as f64 / 100.0)
        .collect();
    let blobs = BinaryMask::from_fn(16, 16, |r, c| {
        ((3..7).contains(&r) && (2..12).contains(&c))
            || sq(r as f64 - 11.0) + sq(c as f64 - 10.0) <= 9.0
    });
    let blobs_pred: Vec<f64> = (0..256)
        .map(|i| (if blobs.data[i] { 0.6 } else { 0.1 }) + ((i * 53 + 7) % 31) as f64 / 100.0)
        .collect();
    let band = BinaryMask::from_fn(9, 13, |r, c| (r as i64 - c as i64 + 2).abs() <= 1);
    let band_pred: Vec<f64> = (0..117)
        .map(|i| ((i * 19 + 3) % 17) as f64 / 16.0)
        .collect();
    let half = BinaryMask::from_fn(8, 8, |r, c| (2..4).contains(&r) && (1..4).contains(&c));
    let half_pred: Vec<f64> = (0..64).map(|i| ((i * 7) % 13) as f64 / 12.0).collect();
    let fixtures = [
        (
            &ellipse,
            &ellipse_pred,
            [
                0.41320483511124795,
                0.45567746414631666,
                0.43713226445716435,
            ],
        ),
        (
            &blobs,
            &blobs_pred,
            [0.7738198949028849, 0.5914370009013796, 0.6108221578760371],
        ),
        (
            &band,
            &band_pred,
            [0.32076551613708165, 0.3662797789555047, 0.4033423025697439],
        ),
        (
            &half,
            &half_pred,
            [0.2869494031348194, 0.14209090779702416, 0.3385862142151904],
        ),
    ];
    let mut worst = 0.0f64;
    for (gt, pred, want) in fixtures {
        let got = [
            metrics::s_measure(pred, gt).unwrap(),
            metrics::weighted_f(pred, gt).unwrap(),
            metrics::mean_e(pred, gt).unwrap(),
        ];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    report(
        7,
        "metric oracles",
        mismatches == 0 && worst <= 1e-6,
        format!("512x512 pairs: {mismatches} miou/cc_delta mismatches; S/wF/E fixtures max error {worst:.2e} <= 1e-6"),
    );
}

#[test]
fn criterion_08_desk_scale_training() {
    let _heavy = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let data = corpus();
    let cfg = toy_config(data, &scratch("ablate"));
    let start = Instant::now();
    let rows = commands::ablate(&cfg, |_, _| {}).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let by_label: BTreeMap<&str, _> = rows.iter().map(|r| (r.label.as_str(), r)).collect();
    let ours = by_label["Ours"];
    let baseline = by_label["B"];
    let (first, last) = (ours.epochs[0].total, ours.epochs[cfg.epochs - 1].total);
    let ratio = last / first;
    let (recall_ours, recall_b) = (
        ours.metrics.skeleton_recall,
        baseline.metrics.skeleton_recall,
    );
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    let pass = labels == ["B", "B+WCAP", "B+ATRM", "Ours"]
        && ratio <= 0.5
        && recall_ours > recall_b
        && secs < ABLATION_BUDGET_S;
    report(
        8,
        "desk-scale training",
        pass,
        format!(
            "(a) epoch-{} mean loss / epoch-1 mean = {last:.4}/{first:.4} = {ratio:.3} <= 0.5; (b) skeleton_recall Ours {recall_ours:.4} > B {recall_b:.4}; ablate {secs:.0}s < {ABLATION_BUDGET_S}s",
            cfg.epochs
        ),
    );
}

#[test]
fn criterion_09_lambda_sweep_shape() {
    let _heavy = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let data = corpus();
    let cfg = toy_config(data, &scratch("sweep"));
    let rows = commands::sweep_lambda(&cfg, &SWEEP_GRID, |_, _| {}).unwrap();
    let lambdas: Vec<f64> = rows.iter().map(|r| r.label.parse().unwrap()).collect();
    let s = |lambda: f64| {
        rows.iter()
            .find(|r| r.config.loss.lambda == lambda)
            .unwrap()
            .metrics
            .s_alpha
    };
    let (s01, s05) = (s(0.1), s(0.5));
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{:.4}", r.label, r.metrics.s_alpha))
        .collect();
    report(
        9,
        "lambda sweep shape",
        lambdas == SWEEP_GRID && s01 >= s05,
        format!(
            "S_alpha(0.1) = {s01:.4} >= S_alpha(0.5) = {s05:.4}; rows {}",
            table.join(" ")
        ),
    );
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn criterion_10_determinism() {
    let _heavy = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let root = scratch("determinism");
    let gen = |name: &str| {
        let opts = GenDataOptions {
            out: root.join(name),
            count: 24,
            eval_count: 6,
            seed: 17,
            ..GenDataOptions::default()
        };
        commands::gen_data(&opts).unwrap();
        files(&root.join(name))
    };
    let (a, b) = (gen("data_a"), gen("data_b"));
    let data_same = a == b;

    let train = |name: &str| {
        let mut cfg = toy_config(&root.join("data_a"), &root.join(name));
        cfg.epochs = 2;
        cfg.seed = 17;
        commands::train(&cfg, |_| {}).unwrap();
        files(&root.join(name).join("final"))
    };
    let (x, y) = (train("run_a"), train("run_b"));
    let ckpt_same = x == y && !x.is_empty();
    report(
        10,
        "determinism",
        data_same && ckpt_same,
        format!(
            "dataset trees identical {data_same} ({} files); final checkpoints identical {ckpt_same} ({} bytes)",
            a.len(),
            x.values().map(Vec::len).sum::<usize>()
        ),
    );
}

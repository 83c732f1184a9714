use deeptopo_core::params::ParamStore;
use deeptopo_core::wcap::{self, WcapConfig, DEFAULT_EPSILON, DESCRIPTOR_DIM, LAPLACIAN};
use deeptopo_core::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn wcap_store(channels: usize, seed: u64) -> (ParamStore<f64>, WcapConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = WcapConfig::new(channels);
    let mut store = ParamStore::new();
    wcap::init_wcap(&mut store, "w", &cfg, 8, &mut rng);
    (store, cfg)
}

#[test]
fn metric_is_spd_over_ten_thousand_descriptors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let wide = Normal::new(0.0, 3.0).unwrap();
    let mut store = ParamStore::<f64>::new();
    wcap::init_wcap(&mut store, "w", &WcapConfig::new(2), 8, &mut rng);
    let mut worst = f64::INFINITY;
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
        let desc = Tensor::from_fn(&[DESCRIPTOR_DIM], |_| wide.sample(&mut rng));
        let mut g = Graph::eval();
        let p = store.bind(&mut g);
        let d = g.constant(desc);
        let m = wcap::build_metric(&mut g, &p, "w", d, DEFAULT_EPSILON).unwrap();
        let state = m.snapshot(&g, d, DEFAULT_EPSILON);
        let gm = g.value(m.metric).data();
        assert_eq!(gm[1], gm[2]);
        assert_eq!(
            gm,
            [
                state.metric[0][0],
                state.metric[0][1],
                state.metric[1][0],
                state.metric[1][1]
            ]
        );
        let (lo, hi) = state.eigenvalues();
        let (plain_lo, plain_hi) = wcap::symmetric_eigenvalues(state.metric);
        assert!((hi - plain_hi).abs() <= 1e-12 * hi && (lo - plain_lo).abs() <= 1e-12 * hi);
        assert!(
            lo >= DEFAULT_EPSILON && hi >= lo,
            "draw {draw}: eigenvalues ({lo}, {hi})"
        );
        worst = worst.min(lo);
    }
    assert!(worst.is_finite());
}

#[test]
fn identity_factor_reduces_to_conv2d_at_f32() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
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
    assert!(worst <= 1e-6, "max |warped − conv2d| = {worst:e}");
}

#[test]
fn warp_is_an_isometry_under_the_factor_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
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
                let d = wcap::metric_distance(*warped, gm);
                assert!(
                    (d - norm).abs() <= 1e-10,
                    "raw {raw:?} offset {base:?}: {d} vs {norm}"
                );
            }
        }
    }
}

#[test]
fn metric_distance_matches_quadratic_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let l = wcap::factor_from_raw::<f64>([
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ]);
        let g = wcap::metric_from_factor(l, DEFAULT_EPSILON);
        let (x, y) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let q = g[0][0] * x * x + 2.0 * g[0][1] * x * y + g[1][1] * y * y;
        assert!((wcap::metric_distance([x, y], g) - q.sqrt()).abs() <= 1e-12);
    }
}

#[test]
fn laplacian_is_the_fixed_depthwise_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&[3, 7, 6], &mut rng);
    let mut g = Graph::eval();
    let xv = g.constant(x.clone());
    let hp = wcap::laplacian_highpass(&mut g, xv).unwrap();
    let kernel = g.constant(Tensor::from_fn(&[3, 3, 3], |i| LAPLACIAN[i % 9]));
    let dw = g.depthwise_conv2d(xv, kernel, 1).unwrap();
    assert!(g.value(hp).max_abs_diff(g.value(dw)) <= 1e-12);
    for c in 0..3 {
        for i in 0..7 {
            for j in 0..6 {
                let at = |di: isize, dj: isize| {
                    let (y, z) = (i as isize + di, j as isize + dj);
                    if y < 0 || z < 0 || y >= 7 || z >= 6 {
                        0.0
                    } else {
                        x.at(&[c, y as usize, z as usize])
                    }
                };
                let want = at(-1, 0) + at(1, 0) + at(0, -1) + at(0, 1) - 4.0 * at(0, 0);
                assert!((g.value(hp).at(&[c, i, j]) - want).abs() <= 1e-12);
            }
        }
    }
}

fn affine(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
    (0..d_out)
        .map(|o| b.data()[o] + (0..d_in).map(|i| x[i] * w.at(&[o, i])).sum::<f64>())
        .collect()
}

#[test]
fn freq_gate_matches_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (mut store, cfg) = wcap_store(3, 16);
    for e in store.entries_mut() {
        e.value = random(e.value.shape(), &mut rng);
    }
    let hp = random(&[cfg.channels, 5, 5], &mut rng);
    let desc = random(&[DESCRIPTOR_DIM], &mut rng);
    let mut g = Graph::eval();
    let p = store.bind(&mut g);
    let (hv, dv) = (g.constant(hp.clone()), g.constant(desc.clone()));
    let gate = wcap::freq_gate(&mut g, &p, "w", hv, dv).unwrap();

    let get = |n: &str| store.get(n).unwrap().clone();
    let pooled: Vec<f64> = hp
        .data()
        .chunks(25)
        .map(|c| c.iter().sum::<f64>() / 25.0)
        .collect();
    let mut joined = affine(
        &pooled,
        &get("w.gate.proj.weight"),
        &get("w.gate.proj.bias"),
    );
    joined.extend_from_slice(desc.data());
    let h: Vec<f64> = affine(&joined, &get("w.gate.fc1.weight"), &get("w.gate.fc1.bias"))
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let logits = affine(&h, &get("w.gate.fc2.weight"), &get("w.gate.fc2.bias"));
    for (c, l) in logits.iter().enumerate() {
        let want = 1.0 / (1.0 + (-l).exp());
        assert!((g.value(gate).data()[c] - want).abs() <= 1e-10);
    }
}

#[test]
fn descriptor_is_mean_then_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut store, _) = wcap_store(2, 17);
    for e in store.entries_mut() {
        e.value = random(e.value.shape(), &mut rng);
    }
    let latent = random(&[4, 8], &mut rng);
    let mut g = Graph::eval();
    let p = store.bind(&mut g);
    let lv = g.constant(latent.clone());
    let d = wcap::project_descriptor(&mut g, &p, "w", lv).unwrap();
    let mean: Vec<f64> = (0..8)
        .map(|j| (0..4).map(|i| latent.at(&[i, j])).sum::<f64>() / 4.0)
        .collect();
    let want = affine(
        &mean,
        store.get("w.descriptor.weight").unwrap(),
        store.get("w.descriptor.bias").unwrap(),
    );
    for (a, b) in g.value(d).data().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn fresh_block_starts_from_identity_metric() {
    let (store, cfg) = wcap_store(2, 18);
    let mut g = Graph::eval();
    let p = store.bind(&mut g);
    let d = g.constant(Tensor::zeros(&[DESCRIPTOR_DIM]));
    let m = wcap::build_metric(&mut g, &p, "w", d, cfg.epsilon).unwrap();
    let l = g.value(m.factor).data();
    assert!((l[0] - 1.0).abs() < 1e-12 && l[1] == 0.0 && l[2] == 0.0 && (l[3] - 1.0).abs() < 1e-12);
}

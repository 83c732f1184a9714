use deeptopo_core::backbone::random_mask;
use deeptopo_core::losses::{self, LossWeights};
use deeptopo_core::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn total_loss_endpoints_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let (seg, rec) = (rng.random_range(0.0..5.0f64), rng.random_range(0.0..5.0f64));
        assert_eq!(losses::total_loss(seg, rec, 0.0).unwrap(), seg);
        assert_eq!(losses::total_loss(seg, rec, 1.0).unwrap(), rec);
        let mut g = Graph::new();
        let (s, r) = (g.param(Tensor::scalar(seg)), g.param(Tensor::scalar(rec)));
        let t0 = losses::total_loss_var(&mut g, s, r, 0.0).unwrap();
        let t1 = losses::total_loss_var(&mut g, s, r, 1.0).unwrap();
        assert_eq!(g.value(t0).data()[0], seg);
        assert_eq!(g.value(t1).data()[0], rec);
    }
}

#[test]
fn object_weight_is_inversely_proportional_to_area() {
    let s_img = 96 * 96;
    for l in [0.5, 1.0, 3.0] {
        for s_obj in 1..=s_img {
            let a = losses::object_weight(s_img, s_obj, l).unwrap();
            let product = a * s_obj as f64;
            let want = l * s_img as f64;
            assert!(
                (product - want).abs() <= 2.0 * f64::EPSILON * want,
                "l {l} area {s_obj}"
            );
        }
        for s_obj in [1, 3, 9, 36, 144] {
            let a = losses::object_weight(s_img, s_obj, l).unwrap();
            let b = losses::object_weight(s_img, 2 * s_obj, l).unwrap();
            assert_eq!(a, 2.0 * b);
        }
    }
    assert_eq!(losses::object_weight(s_img, 0, 1.0), None);
}

#[test]
fn weight_map_clamps_only_after_the_ratio() {
    let w = LossWeights::default();
    let tiny = Tensor::<f64>::from_fn(&[10, 10], |i| if i == 0 { 1.0 } else { 0.0 });
    let wm = losses::dynamic_weight(&tiny, &w).unwrap();
    assert_eq!(wm.alpha, Some(100.0));
    assert_eq!(wm.weights.data()[0], w.alpha_max);
    assert!(wm.weights.data()[1..].iter().all(|&v| v == 1.0));
}

fn recon_value(recon: &Tensor<f64>, target: &Tensor<f64>, seed: u64) -> f64 {
    let plan = random_mask(16, 0.25, seed).unwrap();
    let mut g = Graph::eval();
    let r = g.constant(recon.clone());
    let l = losses::recon_loss(&mut g, r, target, &plan, 4).unwrap();
    g.value(l).data()[0]
}

#[test]
fn recon_loss_ignores_visible_patches() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for seed in 0..20 {
        let plan = random_mask(16, 0.25, seed).unwrap();
        let masked: std::collections::HashSet<usize> =
            losses::masked_pixels(&plan, 16, 4).into_iter().collect();
        let target = Tensor::from_fn(&[3, 16, 16], |_| rng.random_range(0.0..1.0));
        let recon = Tensor::from_fn(&[3, 16, 16], |_| rng.random_range(0.0..1.0));
        let base = recon_value(&recon, &target, seed);

        let mut visible_poked = recon.clone();
        for (i, v) in visible_poked.data_mut().iter_mut().enumerate() {
            if !masked.contains(&(i % 256)) {
                *v += rng.random_range(-10.0..10.0);
            }
        }
        assert_eq!(recon_value(&visible_poked, &target, seed), base);

        let mut masked_poked = recon.clone();
        let first = *masked.iter().min().unwrap();
        masked_poked.data_mut()[first] += 1.0;
        assert_ne!(recon_value(&masked_poked, &target, seed), base);

        let mut g = Graph::new();
        let r = g.param(recon.clone());
        let l = losses::recon_loss(&mut g, r, &target, &plan, 4).unwrap();
        g.backward(l).unwrap();
        let grad = g.grad(r).unwrap();
        for (i, &d) in grad.data().iter().enumerate() {
            assert!(masked.contains(&(i % 256)) || d == 0.0);
        }
    }
}

#[test]
fn seg_loss_matches_hand_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let logits = Tensor::from_fn(&[3, 3], |_| rng.random_range(-3.0..3.0));
        let gt = Tensor::from_fn(&[3, 3], |_| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        let wm = losses::dynamic_weight(&gt, &LossWeights::default()).unwrap();
        let mut g = Graph::eval();
        let x = g.constant(logits.clone());
        let got = losses::seg_loss(&mut g, x, &gt, &wm).unwrap();

        let (x, y, w) = (logits.data(), gt.data(), wm.weights.data());
        let sw: f64 = w.iter().sum();
        let mut bce = 0.0;
        let (mut inter, mut union) = (0.0, 0.0);
        for i in 0..9 {
            let p = 1.0 / (1.0 + (-x[i]).exp());
            bce += w[i] * -(y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln());
            inter += w[i] * p * y[i];
            union += w[i] * (p + y[i] - p * y[i]);
        }
        let want_bce = bce / sw;
        let want_iou = 1.0 - inter / union;
        assert!((g.value(got.bce).data()[0] - want_bce).abs() <= 1e-10);
        assert!((g.value(got.iou).data()[0] - want_iou).abs() <= 1e-10);
        assert!((g.value(got.total).data()[0] - want_bce - want_iou).abs() <= 1e-10);
    }
}

proptest! {
    #[test]
    fn total_loss_stays_between_its_terms(seg in 0.0..10.0f64, rec in 0.0..10.0f64, lambda in 0.0..=1.0f64) {
        let t = losses::total_loss(seg, rec, lambda).unwrap();
        let (lo, hi) = (seg.min(rec), seg.max(rec));
        prop_assert!(t >= lo - 1e-12 && t <= hi + 1e-12);
    }
}

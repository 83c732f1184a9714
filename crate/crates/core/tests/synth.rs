use deeptopo_core::metrics::components;
use deeptopo_core::synth::*;

#[test]
fn skeleton_within_mask_for_many_seeds() {
    for seed in 0..60 {
        let s = generate_scene(Zone::ALL[seed as usize % 3], 64, seed).unwrap();
        assert!(s.skeleton.is_subset_of(&s.mask), "seed {seed}");
        assert!((2..=6).contains(&s.limb_count));
        assert!(s.limb_width_px.iter().all(|w| (1..=3).contains(w)));
    }
}

#[test]
fn shallower_zone_is_brighter() {
    for seed in 0..20 {
        let e = generate_scene(Zone::Epipelagic, 64, seed).unwrap();
        let m = generate_scene(Zone::Mesopelagic, 64, seed).unwrap();
        assert_eq!(e.mask, m.mask);
        assert!(mean_luminance(&e.image, 0..64, 0..64) > mean_luminance(&m.image, 0..64, 0..64));
    }
}

#[test]
fn abyssal_spotlight_vignette() {
    for seed in 0..20 {
        let a = generate_scene(Zone::Abyssal, 64, seed).unwrap();
        let corners = [
            (0..4, 0..4),
            (0..4, 60..64),
            (60..64, 0..4),
            (60..64, 60..64),
        ];
        let corner = corners
            .into_iter()
            .map(|(r, c)| mean_luminance(&a.image, r, c))
            .sum::<f64>()
            / 4.0;
        assert!(
            corner < mean_luminance(&a.image, 24..40, 24..40),
            "seed {seed}"
        );
    }
}

#[test]
fn dataset_is_reproducible() {
    let a = generate_dataset(6, 32, &Zone::ALL, 11).unwrap();
    let b = generate_dataset(6, 32, &Zone::ALL, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[4].zone, Zone::Mesopelagic);
    assert_ne!(a[0].seed, a[1].seed);
    assert_eq!(a[2].seed, sample_seed(11, 2));
    // a sample does not depend on how many others were generated
    assert_eq!(generate_dataset(3, 32, &Zone::ALL, 11).unwrap()[..], a[..3]);
}

#[test]
fn organism_is_nonempty() {
    for seed in 0..30 {
        let s = generate_scene(Zone::Epipelagic, 96, seed).unwrap();
        assert!(components(&s.mask) >= 1);
        assert!(s.mask.count() > 96 * 96 / 50);
    }
}

use std::fs;
use std::path::Path;

use deeptopo::checkpoint::{self, MANIFEST, PAYLOAD};
use deeptopo::config::{Profile, RunConfig};
use deeptopo::dataset::{self, read_dataset, read_manifest};
use deeptopo::error::Error;
use deeptopo_core::backbone::Variant;
use deeptopo_core::model::Model;
use deeptopo_core::synth::{self, Zone};

fn write_corpus(dir: &Path, count: usize) -> Vec<synth::SegSample> {
    let samples = synth::generate_dataset(count, 32, &Zone::ALL, 7).unwrap();
    let named: Vec<_> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (synth::sample_id(i), s.clone()))
        .collect();
    dataset::write_dataset(dir, &named).unwrap();
    samples
}

#[test]
fn dataset_round_trips_masks_exactly_and_images_to_quantization() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = write_corpus(tmp.path(), 5);
    let records = read_dataset(tmp.path()).unwrap();
    assert_eq!(records.len(), 5);
    for (r, s) in records.iter().zip(&samples) {
        assert_eq!(r.mask, s.mask);
        assert_eq!(r.skeleton, s.skeleton);
        assert_eq!(
            (r.entry.zone, r.entry.seed, r.entry.limb_count),
            (s.zone, s.seed, s.limb_count)
        );
        let worst = r
            .image
            .data()
            .iter()
            .zip(s.image.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.5 / 255.0 + 1e-12, "image error {worst}");
    }
    let text = fs::read_to_string(tmp.path().join(dataset::MANIFEST)).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn dataset_errors_name_the_offending_file() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path(), 3);
    let root = tmp.path();

    fs::write(root.join("masks/99999.pgm"), b"P5\n32 32\n255\n").unwrap();
    let err = read_dataset(root).unwrap_err();
    assert!(
        matches!(&err, Error::Manifest { path, .. } if path.ends_with("masks/99999.pgm")),
        "{err}"
    );
    fs::remove_file(root.join("masks/99999.pgm")).unwrap();

    let skel = root.join("skeletons/00001.pgm");
    let saved = fs::read(&skel).unwrap();
    fs::remove_file(&skel).unwrap();
    let err = read_dataset(root).unwrap_err();
    assert!(
        matches!(&err, Error::Manifest { path, .. } if path == &skel),
        "{err}"
    );

    fs::write(&skel, &saved[..saved.len() - 10]).unwrap();
    assert!(
        matches!(read_dataset(root).unwrap_err(), Error::Truncated { path, .. } if path == skel)
    );

    let mut grey = saved.clone();
    *grey.last_mut().unwrap() = 128;
    fs::write(&skel, &grey).unwrap();
    assert!(
        matches!(read_dataset(root).unwrap_err(), Error::Manifest { path, .. } if path == skel)
    );
    fs::write(&skel, &saved).unwrap();

    fs::write(
        root.join("masks/00002.pgm"),
        b"P5\n16 16\n255\n"
            .iter()
            .copied()
            .chain([0u8; 256])
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let err = read_dataset(root).unwrap_err();
    assert!(err.to_string().contains("differs"), "{err}");

    fs::write(root.join("images/00000.ppm"), b"P3\n32 32\n255\n").unwrap();
    let err = read_dataset(root).unwrap_err();
    assert!(matches!(&err, Error::Header { .. }), "{err}");
}

#[test]
fn manifest_rejects_bad_lines() {
    let tmp = tempfile::tempdir().unwrap();
    for bad in [
        "a\tabyssal\t1",
        "a\tshallow\t1\t2",
        "a b\tabyssal\t1\t2",
        "a\tabyssal\t-1\t2",
        "a\tabyssal\t1\t2\na\tabyssal\t1\t2",
    ] {
        fs::write(tmp.path().join(dataset::MANIFEST), bad).unwrap();
        assert!(
            matches!(
                read_manifest(tmp.path()).unwrap_err(),
                Error::Manifest { .. }
            ),
            "{bad:?}"
        );
    }
}

fn toy_model(variant: Variant, seed: u64) -> (RunConfig, Model<f32>) {
    let mut cfg = RunConfig::defaults(Profile::Toy);
    cfg.model.variant = variant;
    cfg.seed = seed;
    let model = Model::new(cfg.model.clone(), seed).unwrap();
    (cfg, model)
}

#[test]
fn checkpoint_round_trip_is_bit_exact_and_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, mut model) = toy_model(Variant::Full, 3);
    for (i, e) in model.params.entries_mut().iter_mut().enumerate() {
        if let Some(v) = e.value.data_mut().first_mut() {
            *v = f32::from_bits(0x3f80_0001 + i as u32);
        }
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    checkpoint::save(&a, &cfg, &model).unwrap();
    let (cfg2, loaded) = checkpoint::load(&a).unwrap();
    assert_eq!(cfg2.model, cfg.model);
    for (x, y) in model.params.entries().iter().zip(loaded.params.entries()) {
        let bits = |t: &deeptopo_core::Tensor<f32>| {
            t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&x.value), bits(&y.value), "{}", x.name);
    }
    checkpoint::save(&b, &cfg2, &loaded).unwrap();
    for f in [MANIFEST, PAYLOAD] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn mismatched_inventory_is_refused_before_any_write() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, full) = toy_model(Variant::Full, 1);
    checkpoint::save(tmp.path(), &cfg, &full).unwrap();

    let (_, mut baseline) = toy_model(Variant::Baseline, 2);
    let before = baseline.params.clone();
    assert!(matches!(
        checkpoint::load_into(tmp.path(), &mut baseline.params),
        Err(Error::Checkpoint { .. })
    ));
    assert_eq!(baseline.params, before);

    let (_, mut other) = toy_model(Variant::Full, 2);
    let before = other.params.clone();
    let bin = tmp.path().join(PAYLOAD);
    let mut bytes = fs::read(&bin).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&bin, &bytes).unwrap();
    let err = checkpoint::load_into(tmp.path(), &mut other.params).unwrap_err();
    assert!(err.to_string().contains("checksum"), "{err}");
    assert_eq!(other.params, before);

    bytes[last] ^= 1;
    bytes.truncate(last);
    fs::write(&bin, &bytes).unwrap();
    assert!(matches!(
        checkpoint::load_into(tmp.path(), &mut other.params),
        Err(Error::Truncated { .. })
    ));
    assert_eq!(other.params, before);

    bytes.extend_from_slice(&[0, 0]);
    fs::write(&bin, &bytes).unwrap();
    assert!(checkpoint::load_into(tmp.path(), &mut other.params)
        .unwrap_err()
        .to_string()
        .contains("trailing"));
    assert_eq!(other.params, before);
}

#[test]
fn baseline_inventory_carries_no_module_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, model) = toy_model(Variant::Baseline, 0);
    checkpoint::save(tmp.path(), &cfg, &model).unwrap();
    let manifest = checkpoint::read_manifest(tmp.path()).unwrap();
    assert!(!manifest.slots.is_empty());
    let module = |name: &str| name.starts_with("wcap.") || name.contains(".astb.");
    assert!(manifest.slots.iter().all(|s| !module(&s.name)));
    let (_, full) = toy_model(Variant::Full, 0);
    assert!(full
        .params
        .entries()
        .iter()
        .any(|e| e.name.starts_with("wcap.")));
    assert!(full
        .params
        .entries()
        .iter()
        .any(|e| e.name.contains(".astb.")));
}

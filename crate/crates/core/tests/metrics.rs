use deeptopo_core::metrics::*;
use proptest::prelude::*;

struct Fixture {
    h: usize,
    w: usize,
    gt: fn(usize, usize) -> bool,
    pred: fn(usize, bool) -> f64,
    s: f64,
    wf: f64,
    e: f64,
}

fn square(v: f64) -> f64 {
    v * v
}

// values from tests/fixtures/metric_reference.py
const FIXTURES: [(&str, Fixture); 4] = [
    (
        "ellipse",
        Fixture {
            h: 12,
            w: 10,
            gt: |r, c| square((r as f64 - 5.0) / 4.0) + square((c as f64 - 4.0) / 3.0) <= 1.0,
            pred: |i, _| ((i * 37 + 11) % 101) as f64 / 100.0,
            s: 0.41320483511124795,
            wf: 0.45567746414631666,
            e: 0.43713226445716435,
        },
    ),
    (
        "blobs",
        Fixture {
            h: 16,
            w: 16,
            gt: |r, c| {
                ((3..7).contains(&r) && (2..12).contains(&c))
                    || square(r as f64 - 11.0) + square(c as f64 - 10.0) <= 9.0
            },
            pred: |i, g| (if g { 0.6 } else { 0.1 }) + ((i * 53 + 7) % 31) as f64 / 100.0,
            s: 0.7738198949028849,
            wf: 0.5914370009013796,
            e: 0.6108221578760371,
        },
    ),
    (
        "band",
        Fixture {
            h: 9,
            w: 13,
            gt: |r, c| (r as i64 - c as i64 + 2).abs() <= 1,
            pred: |i, _| ((i * 19 + 3) % 17) as f64 / 16.0,
            s: 0.32076551613708165,
            wf: 0.3662797789555047,
            e: 0.4033423025697439,
        },
    ),
    (
        "half_centroid",
        Fixture {
            h: 8,
            w: 8,
            gt: |r, c| (2..4).contains(&r) && (1..4).contains(&c),
            pred: |i, _| ((i * 7) % 13) as f64 / 12.0,
            s: 0.2869494031348194,
            wf: 0.14209090779702416,
            e: 0.3385862142151904,
        },
    ),
];

fn build(f: &Fixture) -> (Vec<f64>, BinaryMask) {
    let gt = BinaryMask::from_fn(f.h, f.w, f.gt);
    let pred = (0..f.h * f.w).map(|i| (f.pred)(i, gt.data[i])).collect();
    (pred, gt)
}

#[test]
fn reference_values() {
    for (name, f) in &FIXTURES {
        let (pred, gt) = build(f);
        let s = s_measure(&pred, &gt).unwrap();
        let wf = weighted_f(&pred, &gt).unwrap();
        let e = mean_e(&pred, &gt).unwrap();
        assert!((s - f.s).abs() <= 1e-6, "{name}: S {s} vs {}", f.s);
        assert!((wf - f.wf).abs() <= 1e-6, "{name}: wF {wf} vs {}", f.wf);
        assert!((e - f.e).abs() <= 1e-6, "{name}: E {e} vs {}", f.e);
    }
}

fn bits_mask(bits: u16) -> BinaryMask {
    BinaryMask::from_fn(3, 3, |r, c| bits >> (r * 3 + c) & 1 == 1)
}

/// Component count by repeated neighbor-closure over bitsets.
fn components_oracle(bits: u16) -> i64 {
    let neighbors = |i: usize| -> u16 {
        let (r, c) = ((i / 3) as i64, (i % 3) as i64);
        let mut m = 0;
        for j in 0..9 {
            let (rr, cc) = ((j / 3) as i64, (j % 3) as i64);
            if (rr - r).abs() <= 1 && (cc - c).abs() <= 1 {
                m |= 1 << j;
            }
        }
        m
    };
    let mut left = bits;
    let mut count = 0;
    while left != 0 {
        let mut comp: u16 = 1 << left.trailing_zeros();
        loop {
            let grown = (0..9)
                .filter(|&i| comp >> i & 1 == 1)
                .fold(comp, |a, i| a | neighbors(i))
                & bits;
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
fn exhaustive_3x3_iou_and_components() {
    let masks: Vec<BinaryMask> = (0..512u16).map(bits_mask).collect();
    let comps: Vec<i64> = (0..512u16).map(components_oracle).collect();
    for a in 0..512u16 {
        assert_eq!(
            components(&masks[a as usize]) as i64,
            comps[a as usize],
            "mask {a:09b}"
        );
        let pred = masks[a as usize].to_f64();
        for b in 0..512u16 {
            let gt = &masks[b as usize];
            let (inter, union) = ((a & b).count_ones(), (a | b).count_ones());
            let want = if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            };
            assert_eq!(miou(&pred, gt, 0.5).unwrap(), want);
            assert_eq!(
                cc_delta(&masks[a as usize], gt),
                comps[a as usize] - comps[b as usize]
            );
        }
    }
}

#[test]
fn skeleton_recall_values() {
    let skel = BinaryMask::from_fn(5, 5, |r, _| r == 2);
    let pred = BinaryMask::from_fn(5, 5, |_, c| c < 3);
    assert_eq!(skeleton_recall(&pred, &skel), 0.6);
    assert_eq!(skeleton_recall(&pred, &BinaryMask::empty(5, 5)), 1.0);
}

fn pair() -> impl Strategy<Value = (Vec<f64>, BinaryMask)> {
    (2usize..10, 2usize..10).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(0.0f64..=1.0, h * w),
            prop::collection::vec(any::<bool>(), h * w),
        )
            .prop_map(move |(p, g)| (p, BinaryMask::new(h, w, g).unwrap()))
    })
}

fn blob_mask() -> impl Strategy<Value = BinaryMask> {
    (3usize..14, 3usize..14, prop::collection::vec(0u8..4, 196)).prop_map(|(h, w, v)| {
        // a random mask with some thick regions
        BinaryMask::from_fn(h, w, |r, c| v[(r / 2) * 14 + c / 2 + (r % 2) * 7] < 2)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scores_in_unit_interval((pred, gt) in pair()) {
        for v in [
            s_measure(&pred, &gt).unwrap(),
            weighted_f(&pred, &gt).unwrap(),
            mean_e(&pred, &gt).unwrap(),
            mae(&pred, &gt).unwrap(),
            miou(&pred, &gt, 0.5).unwrap(),
        ] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{v}");
        }
    }

    #[test]
    fn perfect_prediction_scores_one((_, gt) in pair()) {
        let p = gt.to_f64();
        prop_assert_eq!(s_measure(&p, &gt).unwrap(), 1.0);
        prop_assert_eq!(mean_e(&p, &gt).unwrap(), 1.0);
        prop_assert_eq!(mae(&p, &gt).unwrap(), 0.0);
        if gt.count() > 0 {
            prop_assert_eq!(weighted_f(&p, &gt).unwrap(), 1.0);
        }
    }

    #[test]
    fn skeleton_is_topology_preserving_subset(m in blob_mask()) {
        let sk = skeletonize(&m);
        prop_assert!(sk.is_subset_of(&m));
        prop_assert_eq!(components(&sk), components(&m));
        prop_assert_eq!(skeletonize(&sk), sk);
    }
}

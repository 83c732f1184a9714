use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deeptopo::checkpoint;
use deeptopo::train::read_steps;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deeptopo"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit status and the diagnostic, which must be a single line.
fn refused(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = run(dir, args);
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    (out.status.code().unwrap(), err)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
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

fn toy_data(dir: &Path) {
    ok(
        dir,
        &[
            "gen-data",
            "--out",
            "data",
            "--count",
            "4",
            "--eval-count",
            "3",
            "--seed",
            "5",
        ],
    );
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out| {
        [
            "gen-data",
            "--out",
            out,
            "--count",
            "10",
            "--eval-count",
            "2",
            "--size",
            "32",
            "--seed",
            "1",
        ]
    };
    let printed = ok(tmp.path(), &args("a"));
    assert_eq!(
        printed.lines().collect::<Vec<_>>(),
        ["a/train/manifest.tsv", "a/eval/manifest.tsv"]
    );
    ok(tmp.path(), &args("b"));
    let a = tree(&tmp.path().join("a"));
    assert_eq!(a, tree(&tmp.path().join("b")));
    assert_eq!(a.len(), (1 + 3 * 10) + (1 + 3 * 2));
    let manifest = String::from_utf8(a[Path::new("train/manifest.tsv")].clone()).unwrap();
    assert_eq!(manifest.lines().count(), 10);
    let held_out = String::from_utf8(a[Path::new("eval/manifest.tsv")].clone()).unwrap();
    assert_eq!(
        held_out
            .lines()
            .map(|l| l.split('\t').next().unwrap())
            .collect::<Vec<_>>(),
        ["00010", "00011"]
    );
}

#[test]
fn gen_data_refuses_bad_requests_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = refused(tmp.path(), &["gen-data", "--out", "x", "--size", "8"]);
    assert_eq!(code, 1, "{err}");
    assert!(!tmp.path().join("x").exists());
    let (code, _) = refused(
        tmp.path(),
        &["gen-data", "--out", "x", "--zones", "bathyal"],
    );
    assert_eq!(code, 1);
    assert!(!tmp.path().join("x").exists());
    fs::create_dir(tmp.path().join("x")).unwrap();
    fs::write(tmp.path().join("x/keep"), "").unwrap();
    let (code, _) = refused(
        tmp.path(),
        &["gen-data", "--out", "x", "--count", "1", "--size", "32"],
    );
    assert_eq!(code, 1);
    assert_eq!(fs::read_dir(tmp.path().join("x")).unwrap().count(), 1);
}

#[test]
fn help_and_version_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ok(tmp.path(), &["--help"]).contains("sweep-lambda"));
    assert!(ok(tmp.path(), &["train", "--help"]).contains("--set"));
    assert!(ok(tmp.path(), &["--version"]).starts_with("deeptopo"));
}

#[test]
fn train_writes_loadable_checkpoints_and_lambda_zero_logs_segmentation_loss() {
    let tmp = tempfile::tempdir().unwrap();
    toy_data(tmp.path());
    let common = [
        "--epochs",
        "2",
        "--batch-size",
        "2",
        "--lambda",
        "0",
        "--seed",
        "9",
    ];
    ok(
        tmp.path(),
        &[&["train", "--out-dir", "r1"][..], &common].concat(),
    );
    let steps = read_steps(&tmp.path().join("r1/steps.tsv")).unwrap();
    assert_eq!(steps.len(), 4);
    for (_, _, seg, rec, total) in &steps {
        assert_eq!(total, seg);
        assert!(*rec > 0.0);
    }
    let epochs = fs::read_to_string(tmp.path().join("r1/epochs.tsv")).unwrap();
    assert_eq!(epochs.lines().count(), 3);
    for d in ["final", "best"] {
        let (cfg, _) = checkpoint::load(&tmp.path().join("r1").join(d)).unwrap();
        assert_eq!((cfg.epochs, cfg.loss.lambda, cfg.seed), (2, 0.0, 9));
    }

    ok(
        tmp.path(),
        &[&["train", "--out-dir", "r2"][..], &common].concat(),
    );
    for f in ["manifest.txt", "params.bin"] {
        let a = fs::read(tmp.path().join("r1/final").join(f)).unwrap();
        assert_eq!(
            a,
            fs::read(tmp.path().join("r2/final").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        fs::read(tmp.path().join("r1/steps.tsv")).unwrap(),
        fs::read(tmp.path().join("r2/steps.tsv")).unwrap()
    );
}

fn parse_tsv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let head = lines
        .next()
        .unwrap()
        .split('\t')
        .map(String::from)
        .collect();
    (
        head,
        lines
            .map(|l| l.split('\t').map(String::from).collect())
            .collect(),
    )
}

#[test]
fn eval_reports_every_image_and_their_means() {
    let tmp = tempfile::tempdir().unwrap();
    toy_data(tmp.path());
    ok(tmp.path(), &["train", "--epochs", "1", "--out-dir", "run"]);
    let printed = ok(
        tmp.path(),
        &[
            "eval",
            "--checkpoint",
            "run/final",
            "--data",
            "data/eval",
            "--out",
            "ev",
        ],
    );
    assert!(printed.contains("mean"));
    let ev = tmp.path().join("ev");
    assert_eq!(fs::read_dir(ev.join("predictions")).unwrap().count(), 3);
    let (head, rows) = parse_tsv(&fs::read_to_string(ev.join("report.tsv")).unwrap());
    assert_eq!(rows.len(), 3);
    let summary: BTreeMap<String, String> =
        parse_tsv(&fs::read_to_string(ev.join("summary.tsv")).unwrap())
            .1
            .into_iter()
            .map(|r| (r[0].clone(), r[1].clone()))
            .collect();
    assert_eq!(summary["images"], "3");
    for (c, name) in head.iter().enumerate().skip(1) {
        let mean = rows
            .iter()
            .map(|r| r[c].parse::<f64>().unwrap())
            .sum::<f64>()
            / 3.0;
        let reported: f64 = summary[name].parse().unwrap();
        assert!(
            (mean - reported).abs() <= 1e-12,
            "{name}: {mean} vs {reported}"
        );
    }
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    toy_data(tmp.path());
    ok(
        tmp.path(),
        &["eval", "--gt-bypass", "--data", "data/eval", "--out", "gt"],
    );
    let (_, rows) = parse_tsv(&fs::read_to_string(tmp.path().join("gt/summary.tsv")).unwrap());
    let get = |k: &str| {
        rows.iter().find(|r| r[0] == k).unwrap()[1]
            .parse::<f64>()
            .unwrap()
    };
    for k in ["s_alpha", "f_beta_w", "mean_e", "iou", "skeleton_recall"] {
        assert_eq!(get(k), 1.0, "{k}");
    }
    assert_eq!(get("mae"), 0.0);
    assert_eq!(get("cc_delta"), 0.0);
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert_eq!(refused(t, &["train", "--bogus"]).0, 1);
    assert_eq!(
        refused(t, &["train", "--set", "frobnicate=1", "--out-dir", "o"]).0,
        1
    );
    assert_eq!(
        refused(t, &["train", "--epochs", "-3", "--out-dir", "o"]).0,
        1
    );
    assert_eq!(
        refused(
            t,
            &[
                "train",
                "--profile",
                "paper",
                "--lr",
                "1e-3",
                "--out-dir",
                "o"
            ]
        )
        .0,
        1
    );
    assert_eq!(
        refused(t, &["train", "--set", "image_size=64", "--out-dir", "o"]).0,
        1
    );
    assert_eq!(refused(t, &["eval", "--data", "d", "--out", "o"]).0, 1);
    assert!(!t.join("o").exists());
    assert_eq!(
        refused(t, &["train", "--data-dir", "missing", "--out-dir", "o"]).0,
        2
    );
    assert!(!t.join("o").exists());
    assert_eq!(
        refused(
            t,
            &["eval", "--checkpoint", "nope", "--data", "d", "--out", "o"]
        )
        .0,
        2
    );
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    toy_data(tmp.path());
    fs::write(
        tmp.path().join("run.cfg"),
        "# toy run\nepochs = 3\nlambda = 0.25\nbatch_size = 4\n",
    )
    .unwrap();
    ok(
        tmp.path(),
        &[
            "train",
            "--config",
            "run.cfg",
            "--epochs",
            "1",
            "--out-dir",
            "o",
        ],
    );
    let (cfg, _) = checkpoint::load(&tmp.path().join("o/final")).unwrap();
    assert_eq!((cfg.epochs, cfg.loss.lambda, cfg.batch_size), (1, 0.25, 4));
}

#[test]
fn injected_gradient_fault_fails_the_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["gradcheck", "--seeds", "1", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.contains("FAIL")), "{text}");
    assert!(
        text.lines().filter(|l| l.ends_with("pass")).count() > 10,
        "{text}"
    );
}

//! End-to-end checks of the `gwl` binary: exit codes, file outputs, and
//! determinism of the primary artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gwl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn gwl")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn enumerate_then_sample_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = gwl(
        &["enumerate", "--model", "ising:L=4", "--bins=-32:36:4", "--out", "exact.csv"],
        dir,
    );
    assert_eq!(code(&out), 0, "enumerate: {:?}", out);

    let out = gwl(
        &[
            "sample", "--model", "ising:L=4", "--proposal", "random", "--bins=-32:36:4",
            "--iters", "15", "--seed", "42", "--out", "est.csv",
        ],
        dir,
    );
    assert_eq!(code(&out), 0, "sample: {:?}", out);

    let out = gwl(&["compare", "exact.csv", "est.csv", "--tolerance", "0.1"], dir);
    assert_eq!(code(&out), 0, "compare within tolerance: {:?}", out);

    // self-comparison is exact
    let out = gwl(&["compare", "exact.csv", "exact.csv", "--tolerance", "0.0"], dir);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"mean_abs\":0"), "self-compare mean: {stdout}");

    // zero tolerance against the estimate fails with the tolerance code
    let out = gwl(&["compare", "exact.csv", "est.csv", "--tolerance", "0.0"], dir);
    assert_eq!(code(&out), 1);

    // plotting the pair produces an SVG with two polylines
    let out = gwl(
        &["plot", "--in", "exact.csv", "--overlay", "est.csv", "--out", "both.svg"],
        dir,
    );
    assert_eq!(code(&out), 0, "plot: {:?}", out);
    let svg = fs::read_to_string(dir.join("both.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn identical_seeds_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for name in ["a.csv", "b.csv"] {
        let out = gwl(
            &[
                "sample", "--model", "ising:L=3", "--proposal", "random", "--bins=-20:24:4",
                "--iters", "4", "--seed", "7", "--out", name,
            ],
            dir,
        );
        assert_eq!(code(&out), 0, "sample {name}: {:?}", out);
    }
    assert_eq!(fs::read(dir.join("a.csv")).unwrap(), fs::read(dir.join("b.csv")).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // malformed bin spec
    let out = gwl(
        &["enumerate", "--model", "ising:L=2", "--bins", "nope", "--out", "x.csv"],
        dir,
    );
    assert_eq!(code(&out), 2);

    // unknown model
    let out = gwl(
        &["enumerate", "--model", "spinglass", "--bins=-8:16:8", "--out", "x.csv"],
        dir,
    );
    assert_eq!(code(&out), 2);

    // train with a missing label file
    fs::write(dir.join("imgs.idx"), {
        let mut b: Vec<u8> = Vec::new();
        b.extend(0x0000_0803u32.to_be_bytes());
        b.extend(1u32.to_be_bytes());
        b.extend(2u32.to_be_bytes());
        b.extend(2u32.to_be_bytes());
        b.extend([0u8; 4]);
        b
    })
    .unwrap();
    let out = gwl(
        &[
            "train", "--idx-images", "imgs.idx", "--idx-labels", "missing.idx", "--side", "2",
            "--out", "w.json",
        ],
        dir,
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn sample_timeout_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = gwl(
        &[
            "sample", "--model", "ising:L=4", "--proposal", "random", "--bins=-32:36:4",
            "--iters", "1", "--max-steps", "50", "--flatness-stride", "10", "--out", "x.csv",
        ],
        dir,
    );
    assert_eq!(code(&out), 3, "{:?}", out);
}

#[test]
fn checkpoint_resume_matches_uninterrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // uninterrupted 6-iteration run
    let out = gwl(
        &[
            "sample", "--model", "ising:L=3", "--proposal", "random", "--bins=-20:24:4",
            "--iters", "6", "--seed", "9", "--out", "full.csv",
        ],
        dir,
    );
    assert_eq!(code(&out), 0, "{:?}", out);

    // same run split at iteration 3 via checkpoint + resume
    let out = gwl(
        &[
            "sample", "--model", "ising:L=3", "--proposal", "random", "--bins=-20:24:4",
            "--iters", "3", "--seed", "9", "--out", "half.csv", "--checkpoint", "half.ck",
        ],
        dir,
    );
    assert_eq!(code(&out), 0, "{:?}", out);
    let out = gwl(
        &[
            "sample", "--model", "ising:L=3", "--proposal", "random", "--bins=-20:24:4",
            "--iters", "6", "--seed", "9", "--out", "resumed.csv", "--resume", "half.ck",
        ],
        dir,
    );
    assert_eq!(code(&out), 0, "{:?}", out);
    assert_eq!(
        fs::read(dir.join("full.csv")).unwrap(),
        fs::read(dir.join("resumed.csv")).unwrap()
    );
}

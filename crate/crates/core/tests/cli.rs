use std::path::Path;
use std::process::Command;

use adaptive_sst::io::{read_pgm, read_signal_csv};
use adaptive_sst::signal::Builtin;

fn cli(args: &[&str], dir: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_adaptive-sst"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

#[test]
fn synth_writes_a_readable_signal() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["synth", "--builtin", "two-chirp", "--out", "s.csv"], dir.path()), 0);
    let s = read_signal_csv(dir.path().join("s.csv")).unwrap();
    let want = Builtin::TwoChirp.signal();
    assert_eq!(s.len(), want.len());
    for (a, b) in s.samples().iter().zip(want.samples()) {
        assert!((a - b).norm() <= 1e-12);
    }
}

#[test]
fn transform_subcommands_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src = ["--builtin", "two-chirp"];
    let run = |extra: &[&str]| {
        let mut args = vec![extra[0]];
        args.extend_from_slice(&src);
        args.extend_from_slice(&extra[1..]);
        cli(&args, d)
    };
    assert_eq!(run(&["stft", "--sigma", "0.03", "--out", "v.pgm"]), 0);
    assert_eq!(run(&["fsst", "--policy", "sigma2", "--out", "t.csv"]), 0);
    assert_eq!(run(&["select-sigma", "--policy", "sigma-est", "--out", "sigma.csv"]), 0);
    assert_eq!(
        run(&["ridge", "--policy", "sigma2", "--components", "2", "--out", "ridges.csv"]),
        0
    );
    assert_eq!(
        run(&["reconstruct", "--policy", "sigma2", "--components", "2", "--out", "rec"]),
        0
    );
    assert_eq!(run(&["entropy", "--sigma", "0.03", "--variant", "fsst", "--out", "h.csv"]), 0);
    let img = read_pgm(d.join("v.pgm")).unwrap();
    assert_eq!(img.shape(), (129, 256));
    assert!(read_signal_csv(d.join("rec/component_1.csv")).is_ok());
    let sigma = std::fs::read_to_string(d.join("sigma.csv")).unwrap();
    assert_eq!(sigma.lines().count(), 257);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // unknown policy, missing width, bad extension, missing file
    assert_eq!(cli(&["fsst", "--builtin", "two-chirp", "--policy", "widest", "--out", "x.pgm"], d), 2);
    assert_eq!(cli(&["stft", "--builtin", "two-chirp", "--out", "x.pgm"], d), 2);
    assert_eq!(cli(&["stft", "--builtin", "two-chirp", "--sigma", "0.03", "--out", "x.png"], d), 2);
    assert_eq!(cli(&["stft", "--input", "nope.csv", "--sigma", "0.03", "--out", "x.pgm"], d), 2);
    assert_eq!(cli(&["fsst", "--builtin", "two-chirp", "--variant", "fsst2", "--policy", "sigma2", "--out", "x.pgm"], d), 2);
    std::fs::write(d.join("bad.toml"), "[sigma]\npolicy = \"nope\"\n").unwrap();
    assert_eq!(cli(&["experiment", "--config", "bad.toml"], d), 2);
    assert_eq!(cli(&["bogus-subcommand"], d), 2);
    // a window too narrow for the sample rate is a compute failure
    assert_eq!(cli(&["stft", "--builtin", "two-chirp", "--sigma", "0.0001", "--out", "x.pgm"], d), 3);
}

#[test]
fn parse_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ragged.csv"), "0,1\n0.1,2,3\n").unwrap();
    assert_eq!(cli(&["stft", "--input", "ragged.csv", "--sigma", "0.03", "--out", "x.pgm"], d), 2);
}

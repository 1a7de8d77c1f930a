use std::fs;
use std::path::Path;
use std::process::Command;

use p2pnet::cli::run;
use p2pnet::io::{load_checkpoint, read_points};
use p2pnet::trainer::Checkpoint;

const CONFIG: &str = r#"
[network]
preset = "tiny"

[train]
epochs = 2
batch_size = 2
seed = 4

[generator]
kind = "line_disk"
count = 4
points_per_set = 64
"#;

fn call(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("p2pnet").chain(args.iter().copied());
    let code = run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn every_subcommand_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let data = d.join("data");

    let (code, msg) = call(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    assert_eq!(code, 0, "{msg}");
    assert!(data.join("pairs/0003_x.xyz").exists());

    let ck = d.join("ck.p2p");
    let log = d.join("loss.log");
    let (code, stdout) = call(&[
        "train", "--config", s(&cfg), "--data", s(&data), "--out", s(&ck), "--ablation", "ns+rg+",
        "--log", s(&log),
    ]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 2);
    assert!(stdout.starts_with("epoch=0 lr="), "{stdout}");
    assert_eq!(fs::read_to_string(&log).unwrap(), stdout);
    let loaded: Checkpoint<f64> = load_checkpoint(&ck).unwrap();
    assert_eq!(loaded.epoch, 2);

    let x = data.join("pairs/0000_x.xyz");
    let pred = d.join("pred.xyz");
    let (code, _) = call(&[
        "infer", "--ck", s(&ck), "--in", s(&x), "--passes", "3", "--direction", "xy", "--out",
        s(&pred),
    ]);
    assert_eq!(code, 0);
    assert_eq!(read_points(&pred).unwrap().len(), 3 * 64);

    let (code, stdout) = call(&["infer", "--ck", s(&ck), "--in", s(&x), "--direction", "yx"]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 64);

    let truth = data.join("pairs/0000_y.xyz");
    let (code, table) = call(&["eval", "--pred", s(&pred), "--truth", s(&truth)]);
    assert_eq!(code, 0);
    for col in ["separation rate", "curvature diff.", "normal diff."] {
        assert!(table.contains(col), "{table}");
    }

    let svg = d.join("plot.svg");
    let (code, _) = call(&[
        "plot", "--in", s(&x), "--in", s(&truth), "--out", s(&svg), "--overlay-from", s(&x),
        "--overlay-to", s(&truth), "--fraction", "0.25",
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<line").count(), 16);

    let (code, found) = call(&["retrieve", "--query", s(&truth), "--corpus", s(&data.join("pairs"))]);
    assert_eq!(code, 0);
    assert!(found.contains("0000_y.xyz") && found.contains("chamfer=0"), "{found}");

    let (code, report) = call(&["gradcheck", "--instances", "2", "--points", "12"]);
    assert_eq!(code, 0, "{report}");
    assert_eq!(report.lines().count(), 4);
}

#[test]
fn bad_invocations_exit_with_one() {
    assert_eq!(call(&["frobnicate"]).0, 1);
    assert_eq!(call(&["eval", "--pred", "a.xyz", "--truth", "b.xyz", "--bogus"]).0, 1);
    assert_eq!(call(&["infer", "--ck", "c", "--in", "x.xyz", "--direction", "zz"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let out = dir.path().join("d");
    assert_eq!(call(&["synth", "--config", s(&cfg), "--out", s(&out)]).0, 1);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.xyz");
    fs::write(&bad, "0 0\n1 oops\n").unwrap();
    assert_eq!(call(&["eval", "--pred", s(&bad), "--truth", s(&bad)]).0, 2);
    let missing = dir.path().join("missing.xyz");
    assert_eq!(call(&["eval", "--pred", s(&missing), "--truth", s(&missing)]).0, 2);
}

#[test]
fn binary_reports_usage_on_stderr() {
    let out = Command::new(env!("CARGO_BIN_EXE_p2pnet"))
        .arg("--no-such-flag")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let help = Command::new(env!("CARGO_BIN_EXE_p2pnet"))
        .args(["train", "--help"])
        .output()
        .unwrap();
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("lambda_density = 1.0"), "{text}");
}

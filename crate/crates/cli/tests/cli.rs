use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mvtrack_core::bafe::BafeConfig;
use mvtrack_core::temporal_model::{init_params, ModelDims, ModelParams, Variant};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvtrack")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "seed = 3\n[synth]\ngop_count = 4\n";

fn synth(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let (c, cff, gt) = (dir.join("c.toml"), dir.join("a.cff"), dir.join("gt.txt"));
    fs::write(&c, SMALL).unwrap();
    ok(&["synth", "--config", s(&c), "--out", s(&cff), "--gt", s(&gt)]);
    (c, cff, gt)
}

#[test]
fn synth_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, cff_a, gt_a) = synth(a.path());
    let (_, cff_b, gt_b) = synth(b.path());
    assert_eq!(fs::read(cff_a).unwrap(), fs::read(cff_b).unwrap());
    assert_eq!(fs::read(gt_a).unwrap(), fs::read(gt_b).unwrap());
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let (c, cff, gt) = synth(dir.path());
    let out = ok(&["eval", "--config", s(&c), "--cff", s(&cff), "--gt", s(&gt), "--results", s(&gt)]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["map50"].as_f64(), Some(1.0), "{v}");
    assert_eq!(v["seed"].as_u64(), Some(3));
    assert_eq!(v["config_hash"].as_str().map(str::len), Some(64));
}

#[test]
fn zero_epoch_training_writes_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let (c, cff, gt) = synth(dir.path());
    let ck = dir.path().join("m.ckpt");
    ok(&["train", "--config", s(&c), "--cff", s(&cff), "--gt", s(&gt), "--out", s(&ck), "--epochs", "0"]);
    // the checkpoint stores float32, so compare against the initial model
    // written the same way
    let init = init_params(ModelDims::for_bafe(&BafeConfig::default()), Variant::MvDct, 3).unwrap();
    let mut want = Vec::new();
    init.write_checkpoint(&mut want).unwrap();
    assert_eq!(fs::read(&ck).unwrap(), want);
    let back = ModelParams::read_checkpoint(want.as_slice()).unwrap();
    assert!(back.values.iter().zip(&init.values).all(|(a, b)| (a - b).abs() <= 1e-7 * b.abs().max(1e-30)));
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(ck.with_extension("json")).unwrap()).unwrap();
    assert_eq!(log["epoch_loss"].as_array().map(Vec::len), Some(0));
}

#[test]
fn bafe_tracking_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (c, cff, gt) = synth(dir.path());
    let (ck, res, log) = (dir.path().join("m.ckpt"), dir.path().join("r.txt"), dir.path().join("l.jsonl"));
    ok(&["train", "--config", s(&c), "--cff", s(&cff), "--gt", s(&gt), "--out", s(&ck), "--epochs", "1"]);
    ok(&["track", "--config", s(&c), "--cff", s(&cff), "--init", s(&gt), "--tracker", "bafe", "--checkpoint", s(&ck), "--out", s(&res), "--log", s(&log)]);
    let header: serde_json::Value = serde_json::from_str(fs::read_to_string(&log).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["tracker"].as_str(), Some("bafe-mv+dct"));
    let out = ok(&["eval", "--config", s(&c), "--cff", s(&cff), "--gt", s(&gt), "--results", s(&res)]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let map = v["map50"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&map));
}

#[test]
fn zero_streams_give_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let (c, cff, _) = synth(dir.path());
    let out = ok(&["bench", "--config", s(&c), "--cff", s(&cff), "--streams", "0"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["trackers"].as_array().map(Vec::len), Some(0));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[synth]\ngop_sise = 4\n").unwrap();
    let o = run(&["synth", "--config", s(&bad), "--out", s(&dir.path().join("x.cff")), "--gt", s(&dir.path().join("x.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gop_sise"));

    let o = run(&["extract", "--input", s(&dir.path().join("missing.m4v")), "--out", s(&dir.path().join("y.cff"))]);
    assert_eq!(o.status.code(), Some(1));

    let junk = dir.path().join("junk.cff");
    fs::write(&junk, b"not a cff").unwrap();
    let o = run(&["track", "--cff", s(&junk), "--init", s(&junk), "--out", s(&dir.path().join("r.txt"))]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["track", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn diverging_training_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cff, gt) = synth(dir.path());
    let c = dir.path().join("big.toml");
    fs::write(&c, format!("{SMALL}[train]\nlr = 1e300\nepochs = 3\n")).unwrap();
    let o = run(&["train", "--config", s(&c), "--cff", s(&cff), "--gt", s(&gt), "--out", s(&dir.path().join("m.ckpt"))]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

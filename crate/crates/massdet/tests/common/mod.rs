//! Helpers for driving the `massdet` binary in tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use massdet::PipelineConfig;

pub fn massdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_massdet"))
        .args(args)
        .env("MDETECT_LOG", "warn")
        .output()
        .expect("massdet runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs a command and panics with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> Output {
    let o = massdet(args);
    assert_eq!(code(&o), 0, "massdet {args:?} failed: {}", stderr(&o));
    o
}

/// A detector small enough to train for a few epochs in seconds.
pub fn tiny_config(epochs: usize) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.backbone.filters = vec![2, 4, 4, 4, 4];
    c.backbone.input_size = (64, 64);
    c.detector.rpn_channels = 4;
    c.detector.head.hidden = 8;
    c.detector.proposals.pre_nms_n = 200;
    c.train.epochs = epochs;
    c.train.checkpoint_every = 1;
    c
}

pub fn write_config(dir: &Path, cfg: &PipelineConfig) -> PathBuf {
    let p = dir.join("tiny.json");
    std::fs::write(&p, cfg.to_json()).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// synth → split → train → detect → eval → report under `root`.
pub fn full_pipeline(root: &Path, config: &Path, seed: &str) {
    let (data, run, pred, rep, summary) =
        (root.join("data"), root.join("run"), root.join("pred"), root.join("eval"), root.join("report"));
    let c = s(config);
    ok(&["synth", "--n", "12", "--size", "64", "--out", s(&data), "--seed", seed, "--config", c]);
    ok(&["split", "--data", s(&data), "--seed", seed, "--config", c]);
    ok(&["train", "--data", s(&data), "--out", s(&run), "--seed", seed, "--config", c]);
    ok(&["detect", "--model", s(&run.join("model.mdck")), "--input", s(&data), "--split", "test", "--out", s(&pred)]);
    ok(&["eval", "--pred", s(&pred), "--gt", s(&data), "--out", s(&rep), "--config", c]);
    ok(&["report", "--input", s(&rep), "--out", s(&summary)]);
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use storyline::config::RunConfig;
use storyline::pipeline;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

/// Runs the CLI binary.
pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storyline"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The toy model config with the given paths filled in.
pub fn toy_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_file(&fixture("toy/toy.conf")).unwrap();
    cfg.stories = Some(fixture("toy/stories.jsonl"));
    cfg.events = Some(fixture("toy/events.expected.tsv"));
    cfg.word_vectors = Some(fixture("toy/word_vectors.txt"));
    cfg
}

/// Prepares the toy corpus into `dir` with the given split fractions.
pub fn prepare_toy(dir: &Path, valid: f64, test: f64) -> RunConfig {
    let mut cfg = toy_config();
    cfg.valid_fraction = valid;
    cfg.test_fraction = test;
    pipeline::prepare(&cfg, dir).unwrap();
    cfg.data = Some(dir.to_path_buf());
    cfg
}

/// Writes the first `n` toy stories and their events under `dir`.
pub fn toy_subset(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let take = |src: &str, name: &str| {
        let text = std::fs::read_to_string(fixture(src)).unwrap();
        let body: String = text.lines().take(n).map(|l| format!("{l}\n")).collect();
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    (
        take("toy/stories.jsonl", "stories.jsonl"),
        take("toy/events.expected.tsv", "events.tsv"),
    )
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wic_core::data::{write_instances, write_usages};
use wic_core::store::write_store;
use wic_core::synthetic::corpus;
use wic_core::Task;

pub fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wic-disagree"))
}

pub fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

pub fn run_config(command: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes a synthetic corpus of `n` instances as train (first 80%) and test
/// splits plus one embedding store, under `dir/data`.
pub fn write_fixture(dir: &Path, task: Task, n: usize, dim: usize, seed: u64) {
    let c = corpus(task, n, dim, seed).unwrap();
    let data = dir.join("data");
    for split in ["train", "test"] {
        std::fs::create_dir_all(data.join(split)).unwrap();
    }
    let cut = n * 4 / 5;
    let (train_inst, test_inst) = c.instances.split_at(cut);
    let (train_use, test_use) = c.usages.split_at(2 * cut);
    write_usages(&data.join("train/usages.tsv"), train_use).unwrap();
    write_instances(&data.join("train/instances.tsv"), train_inst).unwrap();
    write_usages(&data.join("test/usages.tsv"), test_use).unwrap();
    write_instances(&data.join("test/instances.tsv"), test_inst).unwrap();
    write_store(&c.records, &data.join("store.wice")).unwrap();
}

/// Writes `dir/<name>.toml` pointing at the fixture, with extra TOML
/// appended, and returns its path.
pub fn write_config(dir: &Path, name: &str, task: Task, method: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"task = "{task}"
method = "{method}"
seed = 7

[data]
embeddings = "data/store.wice"
output_dir = "out/{name}"
train = {{ usages = "data/train/usages.tsv", instances = "data/train/instances.tsv" }}
test = {{ usages = "data/test/usages.tsv", instances = "data/test/instances.tsv" }}
{extra}"#
    );
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

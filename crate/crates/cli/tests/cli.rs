mod common;

use std::collections::HashMap;

use common::{assert_ok, run, run_config, write_config, write_fixture};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use wic_core::data::read_instances;
use wic_core::Task;

const SMALL_NEURAL: &str = "[neural]\nhidden = [16, 8]\nbottleneck = 4\n";
const SMALL_GBDT: &str = "[gbdt]\nn_rounds = 20\nmax_depth = 3\n";

fn fixture(task: Task, n: usize) -> TempDir {
    let dir = TempDir::new().unwrap();
    write_fixture(dir.path(), task, n, 8, 11);
    dir
}

fn read(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn stats_matches_hand_count() {
    // 40 instances -> 32 train instances over lemmas 0..3 (10 instances each,
    // the fourth only 2). Lemmas alternate de/en by group: de gets lemma0 and
    // lemma2 (20 instances, 40 contexts), en gets lemma1 and lemma3
    // (12 instances, 24 contexts). Every context has 5 words.
    let dir = fixture(Task::Ogwic, 40);
    let config = write_config(dir.path(), "stats", Task::Ogwic, "baseline", "");
    let out = run_config("stats", &config, &[]);
    assert_ok(&out);
    let expected = "language\tunique_contexts\tunique_lemmas\tcontext_length\togwic_instances\tdiswic_instances\n\
                    de\t40\t2\t5\t20\t20\n\
                    en\t24\t2\t5\t12\t12\n\
                    AVG\t32\t2\t5\t16\t16\n";
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected);
    assert_eq!(read(&dir.path().join("out/stats/stats.tsv")), expected);
}

#[test]
fn stats_on_empty_corpus_and_missing_file() {
    let dir = fixture(Task::Ogwic, 10);
    let data = dir.path().join("data/train");
    std::fs::write(
        data.join("usages.tsv"),
        "usage_id\tlemma\tlanguage\ttarget_start\ttarget_end\tcontext\n",
    )
    .unwrap();
    std::fs::write(
        data.join("instances.tsv"),
        "instance_id\tlemma\tlanguage\tusage_1\tusage_2\tratings\n",
    )
    .unwrap();
    let config = write_config(dir.path(), "empty", Task::Ogwic, "baseline", "");
    let out = run_config("stats", &config, &[]);
    assert_ok(&out);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);

    std::fs::remove_file(data.join("usages.tsv")).unwrap();
    let out = run_config("stats", &config, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = fixture(Task::Ogwic, 10);
    let config = write_config(dir.path(), "bad", Task::Ogwic, "baseline", "[neural]\nlayers = 3\n");
    let out = run_config("stats", &config, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layers"));
    let out = run(&["stats", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn adapter_train_writes_checkpoint_and_log() {
    let dir = fixture(Task::Ogwic, 100);
    let a = write_config(dir.path(), "a", Task::Ogwic, "adapter", SMALL_NEURAL);
    let b = write_config(dir.path(), "b", Task::Ogwic, "adapter", SMALL_NEURAL);
    assert_ok(&run_config("train", &a, &[]));
    assert_ok(&run_config("train", &b, &[]));
    let out = dir.path().join("out");
    let ckpt = std::fs::read(out.join("a/network.wicm")).unwrap();
    assert_eq!(&ckpt[..4], b"WICM");
    assert_eq!(ckpt, std::fs::read(out.join("b/network.wicm")).unwrap());

    let log = read(&out.join("a/train_log.tsv"));
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch\ttrain_loss\tdev_metric");
    assert_eq!(lines.len(), 11);
    assert!(lines[10].starts_with("10\t"));

    let manifest: Value = serde_json::from_str(&read(&out.join("a/manifest.json"))).unwrap();
    assert_eq!(manifest["method"], "adapter");
    assert_eq!(manifest["neural"]["epochs"], 10);
    assert_eq!(manifest["neural"]["seed"], 7);
}

#[test]
fn ensemble_manifest_lists_both_models_and_weights() {
    for (task, weights) in [(Task::Ogwic, [0.4, 0.3]), (Task::Diswic, [0.4, 0.6])] {
        let dir = fixture(task, 60);
        let config = write_config(dir.path(), "e", task, "ensemble", SMALL_GBDT);
        assert_ok(&run_config("train", &config, &[]));
        let out = dir.path().join("out/e");
        let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
        assert_eq!(manifest["models"][0]["files"], serde_json::json!(["gbdt_c.wict", "gbdt_x.wict"]));
        assert_eq!(manifest["ensemble_weights"], serde_json::json!(weights));
        assert_eq!(manifest["gbdt"][0]["colsample"], 1.0);
        assert_eq!(manifest["gbdt"][1]["colsample"], 0.8);
        for f in ["gbdt_c.wict", "gbdt_x.wict"] {
            assert_eq!(&std::fs::read(out.join(f)).unwrap()[..4], b"WICT");
        }
    }
}

fn predictions(path: &std::path::Path) -> Vec<(String, String)> {
    read(path)
        .lines()
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect()
}

#[test]
fn predict_rows_and_values() {
    let dir = fixture(Task::Ogwic, 100);
    let config = write_config(dir.path(), "p", Task::Ogwic, "xlmr", "");
    assert_ok(&run_config("train", &config, &[]));
    let out = run_config("predict", &config, &[]);
    assert_ok(&out);
    let path = dir.path().join("out/p/predictions.tsv");
    let first = read(&path);
    let rows = predictions(&path);
    let gold = read_instances(&dir.path().join("data/test/instances.tsv")).unwrap();
    assert_eq!(rows.len(), gold.len());
    for ((id, v), g) in rows.iter().zip(&gold) {
        assert_eq!(id, &g.instance_id);
        assert!(["1", "2", "3", "4"].contains(&v.as_str()), "{v}");
    }
    assert_ok(&run_config("predict", &config, &[]));
    assert_eq!(read(&path), first);
}

#[test]
fn diswic_predictions_have_six_decimals() {
    let dir = fixture(Task::Diswic, 60);
    let config = write_config(dir.path(), "d", Task::Diswic, "baseline", "");
    assert_ok(&run_config("train", &config, &[]));
    assert_ok(&run_config("predict", &config, &[]));
    for (_, v) in predictions(&dir.path().join("out/d/predictions.tsv")) {
        let (_, frac) = v.split_once('.').unwrap();
        assert_eq!(frac.len(), 6, "{v}");
    }
    let manifest: Value = serde_json::from_str(&read(&dir.path().join("out/d/manifest.json"))).unwrap();
    assert_eq!(manifest["ridge"], 1e-6);
}

fn write_gold_predictions(dir: &std::path::Path, task: Task) -> std::path::PathBuf {
    let gold = read_instances(&dir.join("data/test/instances.tsv")).unwrap();
    let mut text = String::new();
    for inst in &gold {
        if let Some(t) = inst.target(task) {
            text.push_str(&format!("{}\t{t}\n", inst.instance_id));
        }
    }
    let path = dir.join("gold_pred.tsv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn evaluate_perfect_predictions() {
    for task in [Task::Ogwic, Task::Diswic] {
        let dir = fixture(task, 100);
        let config = write_config(dir.path(), "ev", task, "baseline", "");
        let pred = write_gold_predictions(dir.path(), task);
        let out = run_config("evaluate", &config, &["--pred", pred.to_str().unwrap()]);
        assert_ok(&out);
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(stdout, "\tAVG\tDE\tEN\nbaseline\t1.000\t1.000\t1.000\n");
        let report: Value = serde_json::from_str(&read(&dir.path().join("out/ev/evaluation.json"))).unwrap();
        assert_eq!(report["per_language"]["de"]["value"], 1.0);
        assert_eq!(report["pooled"]["value"], 1.0);
    }
}

/// Spearman's rho written out directly: average ranks, then Pearson.
fn rho_oracle(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn evaluate_shuffled_predictions() {
    let dir = fixture(Task::Diswic, 2000);
    let config = write_config(dir.path(), "sh", Task::Diswic, "baseline", "");
    let gold = read_instances(&dir.path().join("data/test/instances.tsv")).unwrap();
    let mut values: Vec<f64> = gold.iter().map(|i| i.target(Task::Diswic).unwrap()).collect();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let mut text = String::new();
    for (inst, v) in gold.iter().zip(&values) {
        text.push_str(&format!("{}\t{v:.6}\n", inst.instance_id));
    }
    let pred = dir.path().join("shuffled.tsv");
    std::fs::write(&pred, text).unwrap();
    assert_ok(&run_config("evaluate", &config, &["--pred", pred.to_str().unwrap()]));

    let report: Value = serde_json::from_str(&read(&dir.path().join("out/sh/evaluation.json"))).unwrap();
    let pooled = report["pooled"]["value"].as_f64().unwrap();
    let gold_values: Vec<f64> = gold.iter().map(|i| i.target(Task::Diswic).unwrap()).collect();
    let parsed: Vec<f64> = values.iter().map(|v| format!("{v:.6}").parse().unwrap()).collect();
    let expected = rho_oracle(&gold_values, &parsed);
    assert!((pooled - expected).abs() < 1e-12, "{pooled} vs {expected}");
    assert!(pooled.abs() < 0.1, "{pooled}");
}

#[test]
fn evaluate_id_mismatch_and_undefined() {
    let dir = fixture(Task::Ogwic, 20);
    let config = write_config(dir.path(), "mm", Task::Ogwic, "baseline", "");
    let pred = write_gold_predictions(dir.path(), Task::Ogwic);
    let mut text = read(&pred);
    text.push_str("ghost\t2\n");
    std::fs::write(&pred, &text).unwrap();
    let out = run_config("evaluate", &config, &["--pred", pred.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost"));

    let first_line_only = text.lines().next().unwrap().to_string() + "\n";
    std::fs::write(&pred, first_line_only).unwrap();
    let out = run_config("evaluate", &config, &["--pred", pred.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Every gold label equal: alpha is undefined in every language.
    let gold = dir.path().join("const_gold.tsv");
    std::fs::write(
        &gold,
        "instance_id\tlemma\tlanguage\tusage_1\tusage_2\tratings\n\
         a\tx\tde\tu1\tu2\t2,2\nb\tx\tde\tu1\tu3\t2,2\nc\ty\ten\tu4\tu5\t3\nd\ty\ten\tu4\tu6\t3\n",
    )
    .unwrap();
    std::fs::write(&pred, "a\t2\nb\t2\nc\t3\nd\t3\n").unwrap();
    let out = run_config(
        "evaluate",
        &config,
        &["--gold", gold.to_str().unwrap(), "--pred", pred.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("undef"));
}

#[test]
fn plot_density_integrates_to_one() {
    let dir = fixture(Task::Ogwic, 400);
    let config = write_config(dir.path(), "den", Task::Ogwic, "baseline", "");
    assert_ok(&run_config("plot-density", &config, &[]));
    let csv = read(&dir.path().join("out/den/density.csv"));
    let mut area: HashMap<u8, f64> = HashMap::new();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (start, end, d): (f64, f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap());
        *area.entry(f[0].parse().unwrap()).or_default() += d * (end - start);
        rows += 1;
    }
    assert_eq!(rows, 4 * 50);
    for (label, a) in area {
        // Bin edges are printed with 6 decimals.
        assert!((a - 1.0).abs() < 1e-4, "label {label}: {a}");
    }
}

#[test]
fn per_language_models() {
    let dir = fixture(Task::Diswic, 100);
    let config = write_config(dir.path(), "pl", Task::Diswic, "ensemble", SMALL_GBDT);
    assert_ok(&run_config("train", &config, &["--per-language"]));
    let out = dir.path().join("out/pl");
    for lang in ["de", "en"] {
        assert!(out.join(format!("lang-{lang}/gbdt_c.wict")).exists());
    }
    let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["per_language"], true);
    assert_eq!(manifest["models"].as_array().unwrap().len(), 2);
    assert_ok(&run_config("predict", &config, &[]));
    assert_ok(&run_config("evaluate", &config, &[]));
}

#[test]
fn predict_before_train_or_with_wrong_method_fails() {
    let dir = fixture(Task::Ogwic, 40);
    let config = write_config(dir.path(), "x", Task::Ogwic, "baseline", "");
    assert_eq!(run_config("predict", &config, &[]).status.code(), Some(2));
    assert_ok(&run_config("train", &config, &[]));
    let other = write_config(dir.path(), "x", Task::Ogwic, "xlmr", "");
    let out = run_config("predict", &other, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("retrain"));
}

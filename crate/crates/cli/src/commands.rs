use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use wic_core::data::{dataset_stats, read_instances, StatsTable};
use wic_core::features::cosine_column;
use wic_core::gbdt::{GbdtConfig, DISWIC_WEIGHTS, OGWIC_WEIGHTS};
use wic_core::metrics::{evaluate_by_language, EvalReport, Score};
use wic_core::neural::TrainConfig;
use wic_core::store::{join, join_for_prediction, read_store};
use wic_core::{AlignedSplit, Dataset, EmbeddingStore, Task};

use crate::config::{ExperimentConfig, Method, SplitSection};
use crate::density::{cosine_densities, DensityTable, DEFAULT_BINS};
use crate::models;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const STATS_FILE: &str = "stats.tsv";
pub const DENSITY_FILE: &str = "density.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    /// `None` for a model trained on every language.
    pub language: Option<String>,
    /// Relative to the output directory.
    pub dir: String,
    pub files: Vec<String>,
    pub train_instances: usize,
}

/// Written next to the model files; records everything needed to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub method: Method,
    pub seed: u64,
    pub per_language: bool,
    pub dim: usize,
    pub models: Vec<ModelEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub neural: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gbdt: Option<[GbdtConfig; 2]>,
    /// Weights of the `C` and `X` ensemble members.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ensemble_weights: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ridge: Option<f64>,
}

impl Manifest {
    pub fn read(output_dir: &Path) -> Result<Self> {
        let path = output_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {} (run `train` first)", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn load_split(section: &SplitSection, name: &str) -> Result<Dataset> {
    let dataset = section
        .paths()
        .load()
        .with_context(|| format!("loading {name} split"))?;
    let d = dataset.discarded();
    if d.no_median + d.too_few_ratings + d.unlabeled > 0 {
        info!(
            "{name}: {} instances without an integral median (not used for OGWiC), \
             {} with fewer than 2 ratings (not used for DisWiC), {} unlabeled",
            d.no_median, d.too_few_ratings, d.unlabeled
        );
    }
    Ok(dataset)
}

fn load_store(config: &ExperimentConfig) -> Result<EmbeddingStore> {
    let path = config.embeddings()?;
    read_store(path).with_context(|| format!("reading embeddings {}", path.display()))
}

fn create_output_dir(config: &ExperimentConfig) -> Result<&Path> {
    let dir = config.data.output_dir.as_path();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Statistics of the training split, also written to `stats.tsv`.
pub fn stats(config: &ExperimentConfig) -> Result<StatsTable> {
    let dataset = load_split(&config.data.train, "train")?;
    let table = dataset_stats(&dataset);
    let dir = create_output_dir(config)?;
    std::fs::write(dir.join(STATS_FILE), table.to_tsv())?;
    Ok(table)
}

fn rows_of(split: &AlignedSplit, language: &str) -> Vec<usize> {
    (0..split.len())
        .filter(|&i| split.languages[i] == language)
        .collect()
}

fn language_dir(language: &str) -> Result<String> {
    if language.is_empty()
        || !language
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        bail!("language code `{language}` cannot be used as a directory name");
    }
    Ok(format!("lang-{language}"))
}

/// Trains the configured method, writing models and `manifest.json`.
pub fn train(config: &ExperimentConfig) -> Result<Manifest> {
    let task = config.task;
    let store = load_store(config)?;
    let train_set = load_split(&config.data.train, "train")?;
    let train = join(&train_set, &store, task).context("aligning train split with embeddings")?;
    if train.is_empty() {
        bail!("train split has no {task} instances");
    }
    let dev = match &config.data.dev {
        Some(section) => {
            let dev_set = load_split(section, "dev")?;
            Some(join(&dev_set, &store, task).context("aligning dev split with embeddings")?)
        }
        None => None,
    };

    let out = create_output_dir(config)?;
    let mut entries = Vec::new();
    if config.per_language {
        let languages: Vec<String> = train
            .languages
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for language in languages {
            let sub = language_dir(&language)?;
            let part = train.select(&rows_of(&train, &language));
            let dev_part = dev.as_ref().map(|d| d.select(&rows_of(d, &language)));
            info!("training {} on {} {language} instances", config.method, part.len());
            let files = models::fit_and_save(config, &part, dev_part.as_ref(), &out.join(&sub))
                .with_context(|| format!("training the {language} model"))?;
            entries.push(ModelEntry {
                language: Some(language),
                dir: sub,
                files,
                train_instances: part.len(),
            });
        }
    } else {
        info!("training {} on {} instances", config.method, train.len());
        let files = models::fit_and_save(config, &train, dev.as_ref(), out)?;
        entries.push(ModelEntry {
            language: None,
            dir: ".".into(),
            files,
            train_instances: train.len(),
        });
    }

    let gbdt = config.gbdt_config();
    let manifest = Manifest {
        task,
        method: config.method,
        seed: config.seed,
        per_language: config.per_language,
        dim: store.dim(),
        models: entries,
        neural: matches!(config.method, Method::Xlmr | Method::Adapter).then(|| config.train_config()),
        gbdt: (config.method == Method::Ensemble).then(|| [gbdt.variant_c(), gbdt.variant_x()]),
        ensemble_weights: (config.method == Method::Ensemble).then(|| {
            let (c, x) = match task {
                Task::Ogwic => OGWIC_WEIGHTS,
                Task::Diswic => DISWIC_WEIGHTS,
            };
            [c, x]
        }),
        ridge: (config.method == Method::Baseline && task == Task::Diswic).then_some(config.baseline.ridge),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(out.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

fn format_prediction(task: Task, value: f64) -> String {
    match task {
        Task::Ogwic => format!("{}", value as u8),
        Task::Diswic => format!("{value:.6}"),
    }
}

/// Predicts the test split with the trained models; returns the path of
/// `predictions.tsv`.
pub fn predict(config: &ExperimentConfig) -> Result<PathBuf> {
    let task = config.task;
    let out = config.data.output_dir.as_path();
    let manifest = Manifest::read(out)?;
    if manifest.task != task || manifest.method != config.method {
        bail!(
            "models in {} are for {}/{}, config asks for {task}/{}; retrain",
            out.display(),
            manifest.task,
            manifest.method,
            config.method
        );
    }
    let store = load_store(config)?;
    if store.dim() != manifest.dim {
        bail!("embeddings have dimension {}, models expect {}", store.dim(), manifest.dim);
    }
    let test_set = load_split(config.test_split()?, "test")?;
    let split = join_for_prediction(&test_set, &store, task).context("aligning test split with embeddings")?;

    let mut predictions = vec![f64::NAN; split.len()];
    for entry in &manifest.models {
        let rows: Vec<usize> = match &entry.language {
            None => (0..split.len()).collect(),
            Some(lang) => rows_of(&split, lang),
        };
        if rows.is_empty() {
            continue;
        }
        let model = models::load(manifest.method, task, &out.join(&entry.dir))?;
        let part = split.select(&rows);
        for (row, value) in rows.iter().zip(models::predict_split(&model, task, &part)?) {
            predictions[*row] = value;
        }
    }
    let uncovered: Vec<&str> = (0..split.len())
        .filter(|&i| predictions[i].is_nan())
        .map(|i| split.languages[i].as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !uncovered.is_empty() {
        bail!("no model was trained for language(s): {}", uncovered.join(", "));
    }

    let mut text = String::new();
    for (id, value) in split.ids.iter().zip(&predictions) {
        text.push_str(&format!("{id}\t{}\n", format_prediction(task, *value)));
    }
    let path = out.join(PREDICTIONS_FILE);
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Reads `instance_id<TAB>value` lines.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let Some((id, value)) = line.split_once('\t') else {
            bail!("{}:{}: expected `instance_id<TAB>prediction`", path.display(), i + 1);
        };
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("{}:{}: bad prediction `{value}`", path.display(), i + 1))?;
        if !seen.insert(id.to_string()) {
            bail!("{}:{}: duplicate instance id {id}", path.display(), i + 1);
        }
        rows.push((id.to_string(), value));
    }
    Ok(rows)
}

/// Scores predictions against gold instances per language. Gold defaults to
/// the test split's instances file, predictions to `predictions.tsv` in the
/// output directory.
pub fn evaluate(config: &ExperimentConfig, gold: Option<&Path>, pred: Option<&Path>) -> Result<EvalReport> {
    let task = config.task;
    let gold_path = match gold {
        Some(p) => p.to_path_buf(),
        None => config.test_split()?.instances.clone(),
    };
    let pred_path = pred.map_or_else(|| config.data.output_dir.join(PREDICTIONS_FILE), Path::to_path_buf);
    let instances = read_instances(&gold_path).with_context(|| format!("reading gold {}", gold_path.display()))?;
    let predictions: HashMap<String, f64> = read_predictions(&pred_path)?.into_iter().collect();

    let known: HashSet<&str> = instances.iter().map(|i| i.instance_id.as_str()).collect();
    let mut unknown: Vec<&str> = predictions
        .keys()
        .map(String::as_str)
        .filter(|id| !known.contains(id))
        .collect();
    unknown.sort_unstable();
    if !unknown.is_empty() {
        bail!(
            "{} predicted id(s) are not in the gold file, e.g. {}",
            unknown.len(),
            unknown.iter().take(10).copied().collect::<Vec<_>>().join(", ")
        );
    }

    let (mut languages, mut gold_values, mut pred_values, mut missing) = (vec![], vec![], vec![], vec![]);
    for inst in &instances {
        let Some(target) = inst.target(task) else {
            continue;
        };
        match predictions.get(&inst.instance_id) {
            Some(&p) => {
                languages.push(inst.language.clone());
                gold_values.push(target);
                pred_values.push(p);
            }
            None => missing.push(inst.instance_id.as_str()),
        }
    }
    if !missing.is_empty() {
        bail!(
            "{} gold instance(s) have no prediction, e.g. {}",
            missing.len(),
            missing.iter().take(10).copied().collect::<Vec<_>>().join(", ")
        );
    }

    let report = evaluate_by_language(task, &languages, &gold_values, &pred_values)?;
    for (lang, score) in &report.per_language {
        if let Score::Undefined(why) = score {
            warn!("{} undefined for {lang} ({why}); excluded from AVG", report.metric);
        }
    }
    let dir = create_output_dir(config)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    std::fs::write(dir.join(EVALUATION_FILE), json)?;
    Ok(report)
}

/// Cosine-similarity densities per median label over the training split,
/// written to `density.csv`.
pub fn plot_density(config: &ExperimentConfig) -> Result<(PathBuf, DensityTable)> {
    let store = load_store(config)?;
    let dataset = load_split(&config.data.train, "train")?;
    let split = join(&dataset, &store, Task::Ogwic).context("aligning train split with embeddings")?;
    let cosines = cosine_column(&split.e1, &split.e2)?;
    let labels: Vec<u8> = split.labeled_targets()?.iter().map(|&t| t as u8).collect();
    let table = cosine_densities(&cosines, &labels, DEFAULT_BINS)?;
    let path = create_output_dir(config)?.join(DENSITY_FILE);
    std::fs::write(&path, table.to_csv())?;
    Ok((path, table))
}

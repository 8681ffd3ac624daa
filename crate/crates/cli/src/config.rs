//! Experiment configuration, read from TOML.
//!
//! ```toml
//! task = "ogwic"          # or "diswic"
//! method = "adapter"      # baseline | xlmr | adapter | ensemble
//! seed = 0
//! per_language = false
//!
//! [data]
//! embeddings = "store.wice"
//! output_dir = "runs/adapter"
//! train = { usages = "train/usages.tsv", instances = "train/instances.tsv" }
//! dev = { usages = "dev/usages.tsv", instances = "dev/instances.tsv" }     # optional
//! test = { usages = "test/usages.tsv", instances = "test/instances.tsv" }
//!
//! [neural]    # optional overrides
//! epochs = 10
//!
//! [gbdt]
//! n_rounds = 500
//!
//! [baseline]
//! ridge = 1e-6
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wic_core::baselines::DEFAULT_RIDGE;
use wic_core::data::SplitPaths;
use wic_core::gbdt::GbdtConfig;
use wic_core::neural::TrainConfig;
use wic_core::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Cosine binning (OGWiC) or ridge regression on `[e1 | e2]` (DisWiC).
    Baseline,
    /// Linear head with dropout on `[e1 | e2]`.
    Xlmr,
    /// Adapter blocks and an MLP head on the adapted, enriched features.
    Adapter,
    /// Two boosted-tree models on the enriched features, combined.
    Ensemble,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Xlmr => "xlmr",
            Method::Adapter => "adapter",
            Method::Ensemble => "ensemble",
        })
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => Method::Baseline,
            "xlmr" => Method::Xlmr,
            "adapter" => Method::Adapter,
            "ensemble" => Method::Ensemble,
            other => bail!("unknown method `{other}`"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub usages: PathBuf,
    pub instances: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub embeddings: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub train: SplitSection,
    pub dev: Option<SplitSection>,
    pub test: Option<SplitSection>,
}

/// Neural hyperparameters; the seed comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub bottleneck: usize,
    pub hidden: Vec<usize>,
}

impl Default for NeuralSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            dropout: d.dropout,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            weight_decay: d.weight_decay,
            bottleneck: d.bottleneck,
            hidden: d.hidden,
        }
    }
}

impl NeuralSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            dropout: self.dropout,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
            bottleneck: self.bottleneck,
            hidden: self.hidden.clone(),
            seed,
        }
    }
}

/// Boosting hyperparameters shared by both ensemble members; they differ
/// only in column subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtSection {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_rounds: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbdtSection {
    fn default() -> Self {
        let d = GbdtConfig::default();
        Self {
            learning_rate: d.learning_rate,
            max_depth: d.max_depth,
            n_rounds: d.n_rounds,
            min_samples_leaf: d.min_samples_leaf,
        }
    }
}

impl GbdtSection {
    pub fn gbdt_config(&self, seed: u64) -> GbdtConfig {
        GbdtConfig {
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            n_rounds: self.n_rounds,
            min_samples_leaf: self.min_samples_leaf,
            seed,
            ..GbdtConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub ridge: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub per_language: bool,
    pub data: DataSection,
    #[serde(default)]
    pub neural: NeuralSection,
    #[serde(default)]
    pub gbdt: GbdtSection,
    #[serde(default)]
    pub baseline: BaselineSection,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl SplitSection {
    fn resolved(&self, base: &Path) -> SplitSection {
        SplitSection {
            usages: resolve(base, &self.usages),
            instances: resolve(base, &self.instances),
        }
    }

    pub fn paths(&self) -> SplitPaths {
        SplitPaths {
            usages: self.usages.clone(),
            instances: self.instances.clone(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text)?;
        let d = &mut config.data;
        d.embeddings = d.embeddings.as_deref().map(|p| resolve(base, p));
        d.output_dir = resolve(base, &d.output_dir);
        d.train = d.train.resolved(base);
        d.dev = d.dev.as_ref().map(|s| s.resolved(base));
        d.test = d.test.as_ref().map(|s| s.resolved(base));
        config.train_config().validate()?;
        config.gbdt_config().validate()?;
        if config.baseline.ridge.is_nan() || config.baseline.ridge < 0.0 {
            bail!("baseline.ridge must be non-negative");
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn train_config(&self) -> TrainConfig {
        self.neural.train_config(self.seed)
    }

    pub fn gbdt_config(&self) -> GbdtConfig {
        self.gbdt.gbdt_config(self.seed)
    }

    pub fn embeddings(&self) -> Result<&Path> {
        self.data
            .embeddings
            .as_deref()
            .context("data.embeddings is required for this command")
    }

    pub fn test_split(&self) -> Result<&SplitSection> {
        self.data
            .test
            .as_ref()
            .context("data.test is required for this command")
    }
}

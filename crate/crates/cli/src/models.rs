//! Fitting, saving and loading the four methods behind one interface.

use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use wic_core::baselines::{fit_linreg, optimize_bins, predict_linreg, BinThresholds, LinearModel};
use wic_core::features::{cosine_column, feature_matrix, FeatureKind};
use wic_core::gbdt::{Ensemble, GbdtModel};
use wic_core::neural::checkpoint::CheckpointHeader;
use wic_core::neural::{fit, predict, read_checkpoint, write_checkpoint, Architecture, Network, NetworkSpec};
use wic_core::neural::train::log_to_tsv;
use wic_core::{AlignedSplit, Task};

use crate::config::{ExperimentConfig, Method};

pub const BASELINE_FILE: &str = "baseline.json";
pub const CHECKPOINT_FILE: &str = "network.wicm";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const GBDT_C_FILE: &str = "gbdt_c.wict";
pub const GBDT_X_FILE: &str = "gbdt_x.wict";

pub enum Model {
    Bins(BinThresholds),
    Linreg(LinearModel),
    Network(Box<Network>),
    Ensemble(Ensemble),
}

fn labels_u8(targets: &[f64]) -> Vec<u8> {
    targets.iter().map(|&t| t as u8).collect()
}

fn architecture(method: Method) -> Option<Architecture> {
    match method {
        Method::Xlmr => Some(Architecture::LinearHead),
        Method::Adapter => Some(Architecture::Adapter),
        Method::Baseline | Method::Ensemble => None,
    }
}

/// Trains `config.method` on `train` and writes its artifacts into `dir`.
/// Returns the names of the files written.
pub fn fit_and_save(
    config: &ExperimentConfig,
    train: &AlignedSplit,
    dev: Option<&AlignedSplit>,
    dir: &Path,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let task = config.task;
    let y = train.labeled_targets()?;
    match config.method {
        Method::Baseline => {
            let json = match task {
                Task::Ogwic => {
                    let sims = cosine_column(&train.e1, &train.e2)?;
                    let bins = optimize_bins(&sims, &labels_u8(&y))?;
                    info!(
                        "bins t1={:.6} t2={:.6} t3={:.6}, training alpha {:.4}",
                        bins.t1, bins.t2, bins.t3, bins.alpha
                    );
                    bins.to_json()?
                }
                Task::Diswic => {
                    let x = feature_matrix(FeatureKind::Plain, &train.e1, &train.e2)?;
                    fit_linreg(&x, &y, config.baseline.ridge)?.to_json()?
                }
            };
            std::fs::write(dir.join(BASELINE_FILE), json)?;
            Ok(vec![BASELINE_FILE.into()])
        }
        Method::Xlmr | Method::Adapter => {
            let arch = architecture(config.method).expect("neural method");
            let train_config = config.train_config();
            let spec = NetworkSpec::for_task(arch, task, train.dim(), &train_config);
            let (network, log) = fit(spec.clone(), task, train, dev, &train_config)?;
            let header = CheckpointHeader {
                task,
                spec,
                train: train_config,
            };
            write_checkpoint(&dir.join(CHECKPOINT_FILE), &header, &network)?;
            std::fs::write(dir.join(TRAIN_LOG_FILE), log_to_tsv(&log))?;
            Ok(vec![CHECKPOINT_FILE.into(), TRAIN_LOG_FILE.into()])
        }
        Method::Ensemble => {
            let x = feature_matrix(FeatureKind::Enriched, &train.e1, &train.e2)?;
            let ensemble = Ensemble::fit(&x, &y, task, &config.gbdt_config())?;
            ensemble.c.write(&dir.join(GBDT_C_FILE))?;
            ensemble.x.write(&dir.join(GBDT_X_FILE))?;
            Ok(vec![GBDT_C_FILE.into(), GBDT_X_FILE.into()])
        }
    }
}

pub fn load(method: Method, task: Task, dir: &Path) -> Result<Model> {
    let read_text = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
    };
    Ok(match method {
        Method::Baseline => match task {
            Task::Ogwic => Model::Bins(BinThresholds::from_json(&read_text(BASELINE_FILE)?)?),
            Task::Diswic => Model::Linreg(LinearModel::from_json(&read_text(BASELINE_FILE)?)?),
        },
        Method::Xlmr | Method::Adapter => {
            let path = dir.join(CHECKPOINT_FILE);
            let (header, network) =
                read_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
            if header.task != task || Some(header.spec.architecture) != architecture(method) {
                bail!("{} was trained for a different task or method", path.display());
            }
            Model::Network(Box::new(network))
        }
        Method::Ensemble => {
            let read = |name: &str| {
                let path = dir.join(name);
                GbdtModel::read(&path).with_context(|| format!("reading {}", path.display()))
            };
            let ensemble = Ensemble {
                c: read(GBDT_C_FILE)?,
                x: read(GBDT_X_FILE)?,
            };
            if ensemble.c.task() != task || ensemble.x.task() != task {
                bail!("ensemble in {} was trained for a different task", dir.display());
            }
            Model::Ensemble(ensemble)
        }
    })
}

/// Predictions in row order: labels for OGWiC, scores for DisWiC.
pub fn predict_split(model: &Model, task: Task, split: &AlignedSplit) -> Result<Vec<f64>> {
    Ok(match model {
        Model::Bins(bins) => cosine_column(&split.e1, &split.e2)?
            .into_iter()
            .map(|s| wic_core::baselines::apply_bins(s, bins).map(f64::from))
            .collect::<wic_core::Result<_>>()?,
        Model::Linreg(m) => predict_linreg(m, &feature_matrix(FeatureKind::Plain, &split.e1, &split.e2)?)?,
        Model::Network(net) => predict(net, task, &split.e1, &split.e2)?,
        Model::Ensemble(e) => e.predict(&feature_matrix(FeatureKind::Enriched, &split.e1, &split.e2)?)?,
    })
}

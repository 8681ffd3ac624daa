use log::{debug, info};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::layers::{Mode, NetRng};
use super::loss::task_loss;
use super::model::{Network, NetworkSpec, TrainConfig};
use super::optim::AdamW;
use crate::data::Task;
use crate::error::{Error, Result};
use crate::metrics::task_metric;
use crate::store::AlignedSplit;

const INFERENCE_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-example loss over the epoch's batches.
    pub train_loss: f64,
    /// Task metric on the dev split, when one is given and the metric is
    /// defined.
    pub dev_metric: Option<f64>,
}

pub const LOG_COLUMNS: [&str; 3] = ["epoch", "train_loss", "dev_metric"];

pub fn log_to_tsv(log: &[EpochLog]) -> String {
    let mut out = LOG_COLUMNS.join("\t");
    out.push('\n');
    for e in log {
        let dev = e.dev_metric.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!("{}\t{:.8}\t{}\n", e.epoch, e.train_loss, dev));
    }
    out
}

/// Trains `network` in place for `config.epochs` passes over `train`.
///
/// Batches are drawn in an order shuffled by a generator seeded from
/// `config.seed`; the same generator drives dropout.
pub fn train_network(
    network: &mut Network,
    task: Task,
    train: &AlignedSplit,
    dev: Option<&AlignedSplit>,
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    let targets = train.labeled_targets()?;
    let dev_targets = match dev {
        Some(d) if !d.is_empty() => Some(d.labeled_targets()?),
        _ => None,
    };

    // Offset keeps the shuffle stream apart from the initialization stream
    // when both come from the same seed.
    let mut rng = NetRng::seed_from_u64(config.seed.wrapping_add(1));
    let mut optimizer = AdamW::new(config.adamw());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let e1 = train.e1.select(Axis(0), idx);
            let e2 = train.e2.select(Axis(0), idx);
            let y: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();

            network.zero_grad();
            let out = network.forward(&e1, &e2, Mode::Train, &mut rng)?;
            let (loss, grad) = task_loss(task, &out, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch + 1,
                    loss,
                });
            }
            network.backward(&grad);
            optimizer.step(&mut network.params_mut(), config.learning_rate);
            total += loss * idx.len() as f64;
        }

        let dev_metric = match (dev, &dev_targets) {
            (Some(d), Some(t)) => {
                let pred = predict(network, task, &d.e1, &d.e2)?;
                task_metric(task, t, &pred).ok()
            }
            _ => None,
        };
        let entry = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            dev_metric,
        };
        info!(
            "epoch {epoch}: train loss {:.6}, dev {}",
            entry.train_loss,
            dev_metric.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
        );
        log.push(entry);
    }
    Ok(log)
}

/// Builds a network from `spec` seeded by `config.seed` and trains it.
pub fn fit(
    spec: NetworkSpec,
    task: Task,
    train: &AlignedSplit,
    dev: Option<&AlignedSplit>,
    config: &TrainConfig,
) -> Result<(Network, Vec<EpochLog>)> {
    let mut network = Network::seeded(spec, config.seed)?;
    debug!("network with {} parameters", network.parameter_count());
    let log = train_network(&mut network, task, train, dev, config)?;
    Ok((network, log))
}

/// Index of the largest entry per row plus one; ties go to the lower label.
pub fn argmax_labels(logits: &Array2<f64>) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            (best + 1) as f64
        })
        .collect()
}

/// Evaluation-mode predictions: labels `1..=4` for OGWiC, raw scores for
/// DisWiC.
pub fn predict(network: &Network, task: Task, e1: &Array2<f64>, e2: &Array2<f64>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(e1.nrows());
    let n = e1.nrows();
    let mut start = 0;
    while start < n {
        let end = (start + INFERENCE_CHUNK).min(n);
        let a = e1.slice(ndarray::s![start..end, ..]).to_owned();
        let b = e2.slice(ndarray::s![start..end, ..]).to_owned();
        let y = network.infer(&a, &b)?;
        match task {
            Task::Ogwic => out.extend(argmax_labels(&y)),
            Task::Diswic => out.extend(y.column(0).iter().copied()),
        }
        start = end;
    }
    Ok(out)
}

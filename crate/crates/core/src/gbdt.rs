//! Gradient-boosted regression trees with exact greedy splits.
//!
//! Regression boosts least squares from the mean. Four-class classification
//! boosts one tree per class per round on the softmax residuals `y_k - p_k`,
//! starting from the log class priors. Leaves hold the mean residual.
//!
//! Two configurations of the same engine form the ensemble: `C` sees every
//! feature, `X` subsamples columns per tree. Their outputs are combined with
//! fixed weights.

use std::io::{Cursor, Read};
use std::path::Path;

use log::debug;
use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WICT";
pub const VERSION: u16 = 1;
pub const N_CLASSES: usize = 4;

/// OGWiC: weights on the class-probability vectors of `C` and `X`.
pub const OGWIC_WEIGHTS: (f64, f64) = (0.4, 0.3);
/// DisWiC: weights on the scores of `C` and `X`.
pub const DISWIC_WEIGHTS: (f64, f64) = (0.4, 0.6);

/// Gains closer than this (relative) count as ties.
const GAIN_TIE: f64 = 1e-10;
/// Splits must improve the squared error by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_rounds: usize,
    pub colsample: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_depth: 6,
            n_rounds: 500,
            colsample: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn variant_c(&self) -> Self {
        Self {
            colsample: 1.0,
            ..self.clone()
        }
    }

    pub fn variant_x(&self) -> Self {
        Self {
            colsample: 0.8,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("gbdt learning_rate must be positive".into()));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return Err(Error::InvalidInput("gbdt colsample must be in (0, 1]".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidInput("gbdt min_samples_leaf must be positive".into()));
        }
        Ok(())
    }
}

/// A tree node in preorder storage: a split's left child is the next node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => i = if row[feature] <= threshold { i + 1 } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> (usize, usize) {
            match nodes[i] {
                Node::Leaf(_) => (0, i + 1),
                Node::Split { right, .. } => {
                    let (dl, _) = walk(nodes, i + 1);
                    let (dr, end) = walk(nodes, right);
                    (1 + dl.max(dr), end)
                }
            }
        }
        walk(&self.nodes, 0).0
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Row indices sorted by each feature's value (ties by row index).
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Array2<f64>) -> Self {
        let order = x
            .columns()
            .into_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        Self { order }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn better(gain: f64, best: &Option<Candidate>) -> bool {
    match best {
        None => gain > MIN_GAIN,
        Some(b) => gain > b.gain + GAIN_TIE * b.gain.abs(),
    }
}

enum Built {
    Leaf(f64),
    Split(usize, f64, usize, usize),
}

/// Fits one least-squares tree to `targets`, considering only `features`
/// (ascending). Grows level by level; every node scans each feature's
/// presorted order once per level.
pub fn fit_tree(
    x: &Array2<f64>,
    sorted: &Presorted,
    targets: &[f64],
    features: &[usize],
    max_depth: usize,
    min_samples_leaf: usize,
) -> Tree {
    let n = targets.len();
    // Arena of built nodes; children are arena indices.
    let mut arena: Vec<Built> = Vec::new();
    // Open nodes of the current level: (arena index, count, sum).
    let mut open: Vec<(usize, usize, f64)> = vec![(0, n, targets.iter().sum())];
    arena.push(Built::Leaf(0.0));
    let mut node_of: Vec<i64> = vec![0; n];

    for depth in 0..=max_depth {
        if open.is_empty() {
            break;
        }
        let k = open.len();
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        if depth < max_depth {
            let mut left_n = vec![0usize; k];
            let mut left_s = vec![0f64; k];
            let mut last = vec![f64::NAN; k];
            for &f in features {
                left_n.iter_mut().for_each(|v| *v = 0);
                left_s.iter_mut().for_each(|v| *v = 0.0);
                for &row in &sorted.order[f] {
                    let row = row as usize;
                    let j = node_of[row];
                    if j < 0 {
                        continue;
                    }
                    let j = j as usize;
                    let v = x[[row, f]];
                    let (_, count, sum) = open[j];
                    let nl = left_n[j];
                    if nl >= min_samples_leaf && v > last[j] && count - nl >= min_samples_leaf {
                        let sl = left_s[j];
                        let nr = count - nl;
                        let sr = sum - sl;
                        let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - sum * sum / count as f64;
                        if better(gain, &best[j]) {
                            let mut threshold = 0.5 * (last[j] + v);
                            if threshold >= v {
                                threshold = last[j];
                            }
                            best[j] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                    left_n[j] += 1;
                    left_s[j] += targets[row];
                    last[j] = v;
                }
            }
        }

        let mut next = Vec::new();
        let mut remap = vec![-1i64; k];
        for (j, &(node, count, sum)) in open.iter().enumerate() {
            match best[j] {
                Some(c) => {
                    let l = arena.len();
                    arena.push(Built::Leaf(0.0));
                    arena.push(Built::Leaf(0.0));
                    arena[node] = Built::Split(c.feature, c.threshold, l, l + 1);
                    remap[j] = next.len() as i64;
                    next.push((l, 0, 0.0));
                    next.push((l + 1, 0, 0.0));
                }
                None => arena[node] = Built::Leaf(sum / count as f64),
            }
        }
        for row in 0..n {
            let j = node_of[row];
            if j < 0 {
                continue;
            }
            let j = j as usize;
            match best[j] {
                None => node_of[row] = -1,
                Some(c) => {
                    let base = remap[j] as usize;
                    let side = usize::from(x[[row, c.feature]] > c.threshold);
                    node_of[row] = (base + side) as i64;
                    next[base + side].1 += 1;
                    next[base + side].2 += targets[row];
                }
            }
        }
        open = next;
    }

    let mut nodes = Vec::with_capacity(arena.len());
    fn emit(arena: &[Built], i: usize, out: &mut Vec<Node>) {
        match arena[i] {
            Built::Leaf(v) => out.push(Node::Leaf(v)),
            Built::Split(feature, threshold, l, r) => {
                let at = out.len();
                out.push(Node::Leaf(0.0));
                emit(arena, l, out);
                let right = out.len();
                emit(arena, r, out);
                out[at] = Node::Split {
                    feature,
                    threshold,
                    right,
                };
            }
        }
    }
    emit(&arena, 0, &mut nodes);
    Tree { nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub task: Task,
    pub n_features: usize,
    pub config: GbdtConfig,
    /// One entry per output: the mean for regression, log priors otherwise.
    pub init: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub header: ModelHeader,
    /// `rounds x outputs` trees.
    pub trees: Vec<Vec<Tree>>,
}

fn outputs(task: Task) -> usize {
    match task {
        Task::Ogwic => N_CLASSES,
        Task::Diswic => 1,
    }
}

fn softmax_rows(raw: &Array2<f64>) -> Array2<f64> {
    let mut p = raw.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean training loss of raw scores: MSE, or multiclass log-loss.
pub fn training_loss(task: Task, raw: &Array2<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    match task {
        Task::Diswic => raw.column(0).iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n,
        Task::Ogwic => {
            let mut total = 0.0;
            for (row, &t) in raw.rows().into_iter().zip(y) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_norm = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += log_norm - row[t as usize - 1];
            }
            total / n
        }
    }
}

fn check_targets(task: Task, y: &[f64]) -> Result<()> {
    for &t in y {
        let ok = match task {
            Task::Ogwic => t.fract() == 0.0 && (1.0..=N_CLASSES as f64).contains(&t),
            Task::Diswic => t.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidInput(format!("invalid {task} target {t}")));
        }
    }
    Ok(())
}

fn initial_scores(task: Task, y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    match task {
        Task::Diswic => vec![y.iter().sum::<f64>() / n],
        Task::Ogwic => {
            let mut counts = [0f64; N_CLASSES];
            for &t in y {
                counts[t as usize - 1] += 1.0;
            }
            // Absent classes get half an observation so the prior stays finite.
            counts.iter().map(|&c| (c.max(0.5) / n).ln()).collect()
        }
    }
}

fn draw_features(n_features: usize, colsample: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if colsample >= 1.0 {
        return (0..n_features).collect();
    }
    let m = ((colsample * n_features as f64).ceil() as usize).clamp(1, n_features);
    let mut picked = rand::seq::index::sample(rng, n_features, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Fits a model and returns the training loss before the first round and
/// after every round.
pub fn fit_gbdt_traced(
    x: &Array2<f64>,
    y: &[f64],
    task: Task,
    config: &GbdtConfig,
) -> Result<(GbdtModel, Vec<f64>)> {
    config.validate()?;
    let (n, n_features) = x.dim();
    if n < 2 {
        return Err(Error::InvalidInput(format!("gbdt needs at least 2 rows, got {n}")));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n_features == 0 {
        return Err(Error::InvalidInput("gbdt needs at least one feature".into()));
    }
    check_targets(task, y)?;

    let k = outputs(task);
    let init = initial_scores(task, y);
    let mut raw = Array2::from_shape_fn((n, k), |(_, j)| init[j]);
    let sorted = Presorted::new(x);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut trace = Vec::with_capacity(config.n_rounds + 1);
    trace.push(training_loss(task, &raw, y));

    for round in 0..config.n_rounds {
        let residuals: Vec<Vec<f64>> = match task {
            Task::Diswic => vec![raw.column(0).iter().zip(y).map(|(p, t)| t - p).collect()],
            Task::Ogwic => {
                let p = softmax_rows(&raw);
                (0..k)
                    .map(|c| {
                        (0..n)
                            .map(|i| f64::from(y[i] as usize - 1 == c) - p[[i, c]])
                            .collect()
                    })
                    .collect()
            }
        };
        let mut round_trees = Vec::with_capacity(k);
        for (c, r) in residuals.iter().enumerate() {
            let features = draw_features(n_features, config.colsample, &mut rng);
            let tree = fit_tree(x, &sorted, r, &features, config.max_depth, config.min_samples_leaf);
            for (i, row) in x.rows().into_iter().enumerate() {
                raw[[i, c]] += config.learning_rate * tree.predict_row(row);
            }
            round_trees.push(tree);
        }
        trees.push(round_trees);
        trace.push(training_loss(task, &raw, y));
        if (round + 1) % 100 == 0 {
            debug!("gbdt round {}: loss {:.6}", round + 1, trace[round + 1]);
        }
    }

    let model = GbdtModel {
        header: ModelHeader {
            task,
            n_features,
            config: config.clone(),
            init,
        },
        trees,
    };
    Ok((model, trace))
}

pub fn fit_gbdt(x: &Array2<f64>, y: &[f64], task: Task, config: &GbdtConfig) -> Result<GbdtModel> {
    fit_gbdt_traced(x, y, task, config).map(|(m, _)| m)
}

impl GbdtModel {
    pub fn task(&self) -> Task {
        self.header.task
    }

    /// Accumulated scores before any link function, `n x outputs`.
    pub fn predict_raw(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.header.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.header.n_features,
                found: x.ncols(),
            });
        }
        let k = self.header.init.len();
        let lr = self.header.config.learning_rate;
        let mut raw = Array2::from_shape_fn((x.nrows(), k), |(_, j)| self.header.init[j]);
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            for round in &self.trees {
                for (c, tree) in round.iter().enumerate() {
                    raw[[i, c]] += lr * tree.predict_row(row);
                }
            }
        }
        Ok(raw)
    }

    /// Class probabilities (OGWiC) or a single score column (DisWiC).
    pub fn predict_output(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let raw = self.predict_raw(x)?;
        Ok(match self.header.task {
            Task::Ogwic => softmax_rows(&raw),
            Task::Diswic => raw,
        })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for round in &self.trees {
            for tree in round {
                out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
                for node in &tree.nodes {
                    match *node {
                        Node::Leaf(v) => {
                            out.push(0);
                            out.extend_from_slice(&v.to_le_bytes());
                        }
                        Node::Split {
                            feature, threshold, ..
                        } => {
                            out.push(1);
                            out.extend_from_slice(&(feature as u32).to_le_bytes());
                            out.extend_from_slice(&threshold.to_le_bytes());
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read(&mut cur, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::format(0, "not a WICT model"));
        }
        let version = read_u16(&mut cur)?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported model version {version}")));
        }
        let json_len = read_u32(&mut cur)? as usize;
        let at = cur.position();
        if json_len as u64 > bytes.len() as u64 - at {
            return Err(Error::format(at, "truncated header"));
        }
        let header: ModelHeader = serde_json::from_slice(&bytes[at as usize..at as usize + json_len])
            .map_err(|e| Error::format(at, format!("bad header: {e}")))?;
        cur.set_position(at + json_len as u64);
        let k = outputs(header.task);
        if header.init.len() != k {
            return Err(Error::format(at, "header init length does not match task"));
        }

        let rounds = read_u32(&mut cur)? as usize;
        let mut trees = Vec::with_capacity(rounds.min(bytes.len()));
        for _ in 0..rounds {
            let mut round = Vec::with_capacity(k);
            for _ in 0..k {
                let count = read_u32(&mut cur)? as usize;
                let mut flat = Vec::with_capacity(count.min(bytes.len()));
                for _ in 0..count {
                    let at = cur.position();
                    let mut tag = [0u8; 1];
                    read(&mut cur, &mut tag, "node tag")?;
                    match tag[0] {
                        0 => flat.push((at, None, read_f64(&mut cur)?)),
                        1 => {
                            let feature = read_u32(&mut cur)? as usize;
                            if feature >= header.n_features {
                                return Err(Error::format(at, format!("feature {feature} out of range")));
                            }
                            let threshold = read_f64(&mut cur)?;
                            if !threshold.is_finite() {
                                return Err(Error::format(at, "non-finite threshold"));
                            }
                            flat.push((at, Some(feature), threshold));
                        }
                        t => return Err(Error::format(at, format!("unknown node tag {t}"))),
                    }
                }
                round.push(link_preorder(&flat, cur.position())?);
            }
            trees.push(round);
        }
        if cur.position() != bytes.len() as u64 {
            return Err(Error::format(cur.position(), "trailing bytes after last tree"));
        }
        Ok(Self { header, trees })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Rebuilds right-child links of a preorder node list.
fn link_preorder(flat: &[(u64, Option<usize>, f64)], end: u64) -> Result<Tree> {
    fn walk(flat: &[(u64, Option<usize>, f64)], i: usize, out: &mut Vec<Node>, end: u64) -> Result<usize> {
        let Some(&(_, feature, value)) = flat.get(i) else {
            return Err(Error::format(end, "incomplete tree"));
        };
        match feature {
            None => {
                out[i] = Node::Leaf(value);
                Ok(i + 1)
            }
            Some(feature) => {
                let right = walk(flat, i + 1, out, end)?;
                let after = walk(flat, right, out, end)?;
                out[i] = Node::Split {
                    feature,
                    threshold: value,
                    right,
                };
                Ok(after)
            }
        }
    }
    let mut nodes = vec![Node::Leaf(0.0); flat.len()];
    let used = walk(flat, 0, &mut nodes, end)?;
    if used != flat.len() {
        return Err(Error::format(flat[used].0, "tree has unreachable nodes"));
    }
    Ok(Tree { nodes })
}

fn read(cur: &mut Cursor<&[u8]>, buf: &mut [u8], what: &str) -> Result<()> {
    let at = cur.position();
    cur.read_exact(buf)
        .map_err(|_| Error::format(at, format!("truncated {what}")))
}

fn read_u16(cur: &mut Cursor<&[u8]>) -> Result<u16> {
    let mut b = [0u8; 2];
    read(cur, &mut b, "u16")?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read(cur, &mut b, "u32")?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(cur: &mut Cursor<&[u8]>) -> Result<f64> {
    let mut b = [0u8; 8];
    read(cur, &mut b, "f64")?;
    Ok(f64::from_le_bytes(b))
}

/// Labels from `w_C p_C + w_X p_X`, ties to the lower label.
pub fn combine_probabilities(pc: &Array2<f64>, px: &Array2<f64>, weights: (f64, f64)) -> Result<Vec<f64>> {
    if pc.dim() != px.dim() {
        return Err(Error::InvalidInput(format!(
            "probability matrices differ in shape: {:?} vs {:?}",
            pc.dim(),
            px.dim()
        )));
    }
    let mixed = pc * weights.0 + px * weights.1;
    Ok(crate::neural::train::argmax_labels(&mixed))
}

pub fn combine_scores(sc: &[f64], sx: &[f64], weights: (f64, f64)) -> Result<Vec<f64>> {
    if sc.len() != sx.len() {
        return Err(Error::DimensionMismatch {
            expected: sc.len(),
            found: sx.len(),
        });
    }
    Ok(sc.iter().zip(sx).map(|(c, x)| weights.0 * c + weights.1 * x).collect())
}

/// Final predictions from the two models' outputs, with the task's weights.
pub fn combine(task: Task, out_c: &Array2<f64>, out_x: &Array2<f64>) -> Result<Vec<f64>> {
    match task {
        Task::Ogwic => combine_probabilities(out_c, out_x, OGWIC_WEIGHTS),
        Task::Diswic => combine_scores(
            &out_c.column(0).to_vec(),
            &out_x.column(0).to_vec(),
            DISWIC_WEIGHTS,
        ),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub c: GbdtModel,
    pub x: GbdtModel,
}

impl Ensemble {
    /// Fits both variants of `config` independently.
    pub fn fit(x: &Array2<f64>, y: &[f64], task: Task, config: &GbdtConfig) -> Result<Self> {
        Ok(Self {
            c: fit_gbdt(x, y, task, &config.variant_c())?,
            x: fit_gbdt(x, y, task, &config.variant_x())?,
        })
    }

    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        let task = self.c.task();
        combine(task, &self.c.predict_output(features)?, &self.x.predict_output(features)?)
    }
}

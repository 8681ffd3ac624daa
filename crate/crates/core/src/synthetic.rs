//! Synthetic embedding pairs with known structure, for end-to-end checks.
//!
//! OGWiC pairs have `cos(e1, e2)` uniform on `[0, 1]` and label
//! `1 + #{c > 0.25, 0.5, 0.75}`. DisWiC pairs have `e2 = e1 + t u` with one
//! unit direction `u` shared by the whole sample, so `|e1 - e2| = t` is
//! linear in `[e1 | e2]`, and target `0.25 + 0.8 t` plus Gaussian noise with
//! 10% of the signal's spread.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{Instance, Task, Usage};
use crate::error::Result;
use crate::store::{AlignedSplit, EmbeddingRecord};

pub const OGWIC_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];
pub const DISWIC_MAX_DISTANCE: f64 = 2.0;
pub const LANGUAGES: [&str; 2] = ["de", "en"];

const DISWIC_INTERCEPT: f64 = 0.25;
const DISWIC_SLOPE: f64 = 0.8;
const NOISE_FRACTION: f64 = 0.1;

/// Four-rater rating sets with strictly increasing mean pairwise
/// disagreement, from 0 to 2.
const DISAGREEMENT_TEMPLATES: [[u8; 4]; 9] = [
    [2, 2, 2, 2],
    [2, 2, 2, 3],
    [2, 2, 3, 3],
    [1, 2, 2, 3],
    [1, 2, 3, 3],
    [1, 1, 3, 3],
    [1, 1, 1, 4],
    [1, 2, 3, 4],
    [1, 1, 4, 4],
];

pub fn ogwic_label(cosine: f64) -> u8 {
    1 + OGWIC_THRESHOLDS.iter().filter(|&&t| cosine > t).count() as u8
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `e2` at cosine `c` from `e1`, with the same norm.
fn rotate(rng: &mut ChaCha8Rng, e1: &[f64], c: f64) -> Vec<f64> {
    let norm = dot(e1, e1).sqrt();
    let mut w = gaussian(rng, e1.len());
    let proj = dot(&w, e1) / (norm * norm);
    for (wi, xi) in w.iter_mut().zip(e1) {
        *wi -= proj * xi;
    }
    let wn = dot(&w, &w).sqrt();
    let s = (1.0 - c * c).max(0.0).sqrt();
    e1.iter().zip(&w).map(|(x, wi)| c * x + s * norm * wi / wn).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let u = gaussian(rng, dim);
    let norm = dot(&u, &u).sqrt();
    u.iter().map(|v| v / norm).collect()
}

struct Pair {
    e1: Vec<f64>,
    e2: Vec<f64>,
    latent: f64,
}

fn pairs(task: Task, n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let direction = unit(rng, dim);
    (0..n)
        .map(|_| {
            let e1 = gaussian(rng, dim);
            match task {
                Task::Ogwic => {
                    let c: f64 = rng.random_range(0.0..=1.0);
                    let e2 = rotate(rng, &e1, c);
                    Pair { e1, e2, latent: c }
                }
                Task::Diswic => {
                    let t: f64 = rng.random_range(0.0..=DISWIC_MAX_DISTANCE);
                    let e2 = e1.iter().zip(&direction).map(|(x, u)| x + t * u).collect();
                    Pair { e1, e2, latent: t }
                }
            }
        })
        .collect()
}

fn to_split(pairs: &[Pair], targets: Vec<Option<f64>>) -> Result<AlignedSplit> {
    let n = pairs.len();
    let dim = pairs.first().map_or(0, |p| p.e1.len());
    let e1 = Array2::from_shape_fn((n, dim), |(i, j)| pairs[i].e1[j]);
    let e2 = Array2::from_shape_fn((n, dim), |(i, j)| pairs[i].e2[j]);
    AlignedSplit::from_parts(
        (0..n).map(instance_id).collect(),
        (0..n).map(|i| LANGUAGES[i % LANGUAGES.len()].to_string()).collect(),
        e1,
        e2,
        targets,
    )
}

fn instance_id(i: usize) -> String {
    format!("syn{i:05}")
}

/// `n` OGWiC pairs whose label is a noiseless step function of the cosine.
pub fn ogwic_split(n: usize, dim: usize, seed: u64) -> Result<AlignedSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = pairs(Task::Ogwic, n, dim, &mut rng);
    let targets = pairs.iter().map(|p| Some(f64::from(ogwic_label(p.latent)))).collect();
    to_split(&pairs, targets)
}

/// `n` DisWiC pairs whose target is affine in `|e1 - e2|` plus noise.
pub fn diswic_split(n: usize, dim: usize, seed: u64) -> Result<AlignedSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = pairs(Task::Diswic, n, dim, &mut rng);
    // The slope times the standard deviation of U(0, max).
    let signal_sd = DISWIC_SLOPE * DISWIC_MAX_DISTANCE / 12f64.sqrt();
    let noise = Normal::new(0.0, NOISE_FRACTION * signal_sd).expect("positive sd");
    let targets = pairs
        .iter()
        .map(|p| Some(DISWIC_INTERCEPT + DISWIC_SLOPE * p.latent + noise.sample(&mut rng)))
        .collect();
    to_split(&pairs, targets)
}

pub fn split(task: Task, n: usize, dim: usize, seed: u64) -> Result<AlignedSplit> {
    match task {
        Task::Ogwic => ogwic_split(n, dim, seed),
        Task::Diswic => diswic_split(n, dim, seed),
    }
}

/// Shuffles rows with `seed` and returns `(train, test)` with
/// `round(test_fraction * n)` test rows.
pub fn holdout(split: &AlignedSplit, test_fraction: f64, seed: u64) -> (AlignedSplit, AlignedSplit) {
    let mut idx: Vec<usize> = (0..split.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (test_fraction * split.len() as f64).round() as usize;
    let (test, train) = idx.split_at(n_test);
    (split.select(train), split.select(test))
}

/// A corpus in the on-disk shape: usages, rated instances and embeddings.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub usages: Vec<Usage>,
    pub instances: Vec<Instance>,
    pub records: Vec<EmbeddingRecord>,
}

/// Ratings encode the latent value: OGWiC instances get three identical
/// ratings; DisWiC instances get the rating template whose disagreement
/// level matches the distance.
pub fn corpus(task: Task, n: usize, dim: usize, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = pairs(task, n, dim, &mut rng);
    let mut usages = Vec::with_capacity(2 * n);
    let mut instances = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for (i, p) in pairs.iter().enumerate() {
        let lemma = format!("lemma{}", i / 10);
        let language = LANGUAGES[(i / 10) % LANGUAGES.len()];
        let ids = [format!("u{i:05}a"), format!("u{i:05}b")];
        for (side, id) in ids.iter().enumerate() {
            let prefix = format!("context {} of ", 2 * i + side);
            let start = prefix.chars().count();
            usages.push(Usage {
                usage_id: id.clone(),
                lemma: lemma.clone(),
                language: language.to_string(),
                target_start: start,
                target_end: start + lemma.chars().count(),
                context: format!("{prefix}{lemma} here"),
            });
        }
        let ratings = match task {
            Task::Ogwic => vec![ogwic_label(p.latent); 3],
            Task::Diswic => {
                let last = DISAGREEMENT_TEMPLATES.len() - 1;
                let level = (p.latent / DISWIC_MAX_DISTANCE * last as f64).round() as usize;
                DISAGREEMENT_TEMPLATES[level.min(last)].to_vec()
            }
        };
        let id = instance_id(i);
        instances.push(Instance::new(&id, &lemma, language, &ids[0], &ids[1], ratings)?);
        records.push(EmbeddingRecord::new(
            id,
            p.e1.iter().map(|&v| v as f32).collect(),
            p.e2.iter().map(|&v| v as f32).collect(),
        ));
    }
    Ok(Corpus {
        usages,
        instances,
        records,
    })
}

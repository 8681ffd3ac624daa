//! Ordinal Krippendorff's alpha for two "raters" (gold vs prediction) and
//! Spearman's rho with average ranks for ties.
//!
//! Degenerate inputs (no expected disagreement, constant series) are errors,
//! never `0.0` or `NaN`, so they cannot silently pull down an average.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{Task, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};

pub const N_LABELS: usize = (MAX_RATING - MIN_RATING + 1) as usize;

/// `confusion[g][p]` counts items with gold label `g + 1` and predicted label `p + 1`.
pub type Confusion = [[u64; N_LABELS]; N_LABELS];

fn label_index(label: u8) -> Result<usize> {
    if (MIN_RATING..=MAX_RATING).contains(&label) {
        Ok((label - MIN_RATING) as usize)
    } else {
        Err(Error::InvalidInput(format!(
            "label {label} outside {MIN_RATING}..={MAX_RATING}"
        )))
    }
}

pub fn confusion(gold: &[u8], pred: &[u8]) -> Result<Confusion> {
    if gold.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    let mut c = [[0u64; N_LABELS]; N_LABELS];
    for (&g, &p) in gold.iter().zip(pred) {
        c[label_index(g)?][label_index(p)?] += 1;
    }
    Ok(c)
}

/// Ordinal alpha from a gold x pred confusion matrix.
///
/// The coincidence matrix is `o = C + C^T`; with value totals `n_c` and
/// `N = sum n_c`, the ordinal metric is
/// `delta2(c, k) = (sum_{g=c..=k} n_g - (n_c + n_k) / 2)^2`, and
/// `alpha = 1 - D_o / D_e` with `D_o = sum o_ck delta2 / N` and
/// `D_e = sum n_c n_k delta2 / (N (N - 1))`.
pub fn alpha_from_confusion(conf: &Confusion) -> Result<f64> {
    let mut o = [[0.0f64; N_LABELS]; N_LABELS];
    for c in 0..N_LABELS {
        for k in 0..N_LABELS {
            o[c][k] = (conf[c][k] + conf[k][c]) as f64;
        }
    }
    let n_c: [f64; N_LABELS] = std::array::from_fn(|c| o[c].iter().sum());
    let total: f64 = n_c.iter().sum();
    if total < 4.0 {
        return Err(Error::UndefinedMetric(
            "alpha needs at least 2 items".into(),
        ));
    }

    let mut delta2 = [[0.0f64; N_LABELS]; N_LABELS];
    for c in 0..N_LABELS {
        for k in c + 1..N_LABELS {
            let span: f64 = n_c[c..=k].iter().sum::<f64>() - (n_c[c] + n_c[k]) / 2.0;
            delta2[c][k] = span * span;
            delta2[k][c] = span * span;
        }
    }

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..N_LABELS {
        for k in 0..N_LABELS {
            observed += o[c][k] * delta2[c][k];
            expected += n_c[c] * n_c[k] * delta2[c][k];
        }
    }
    let d_o = observed / total;
    let d_e = expected / (total * (total - 1.0));
    if d_e == 0.0 {
        return Err(Error::UndefinedMetric(
            "alpha: all values identical, expected disagreement is zero".into(),
        ));
    }
    Ok(1.0 - d_o / d_e)
}

pub fn krippendorff_alpha_ordinal(gold: &[u8], pred: &[u8]) -> Result<f64> {
    let conf = confusion(gold, pred)?;
    if gold.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "alpha needs at least 2 items, got {}",
            gold.len()
        )));
    }
    alpha_from_confusion(&conf)
}

/// 1-based ranks; each block of tied values gets the mean of its positions.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in ranked values".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric(
            "correlation of a constant series".into(),
        ));
    }
    // A single sqrt keeps perfectly (anti)correlated ranks at exactly +-1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman_rho(gold: &[f64], pred: &[f64]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    if gold.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "rho needs at least 2 items, got {}",
            gold.len()
        )));
    }
    pearson(&average_ranks(gold)?, &average_ranks(pred)?)
}

/// Task metric on real-valued gold/pred columns. OGWiC values must be labels.
pub fn task_metric(task: Task, gold: &[f64], pred: &[f64]) -> Result<f64> {
    match task {
        Task::Ogwic => {
            let to_labels = |v: &[f64]| -> Result<Vec<u8>> {
                v.iter()
                    .map(|&x| {
                        if x.fract() != 0.0 || !(1.0..=4.0).contains(&x) {
                            Err(Error::InvalidInput(format!("{x} is not a label in 1..=4")))
                        } else {
                            Ok(x as u8)
                        }
                    })
                    .collect()
            };
            krippendorff_alpha_ordinal(&to_labels(gold)?, &to_labels(pred)?)
        }
        Task::Diswic => spearman_rho(gold, pred),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "value")]
pub enum Score {
    Defined(f64),
    Undefined(String),
}

impl Score {
    fn from_result(r: Result<f64>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Score::Defined(v)),
            Err(Error::UndefinedMetric(why)) => Ok(Score::Undefined(why)),
            Err(e) => Err(e),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Score::Defined(v) => Some(*v),
            Score::Undefined(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: Task,
    pub metric: &'static str,
    pub per_language: BTreeMap<String, Score>,
    /// Mean over languages with a defined score.
    pub average: Option<f64>,
    /// Metric over all instances pooled.
    pub pooled: Score,
}

impl EvalReport {
    pub fn all_undefined(&self) -> bool {
        self.per_language.values().all(|s| s.value().is_none())
    }

    /// Header `AVG` + languages, one row of scores (3 decimals).
    pub fn table(&self, row_name: &str) -> String {
        let mut header = vec![String::new(), "AVG".to_string()];
        header.extend(self.per_language.keys().map(|l| l.to_uppercase()));
        let fmt = |v: Option<f64>| v.map_or_else(|| "undef".to_string(), |x| format!("{x:.3}"));
        let mut row = vec![row_name.to_string(), fmt(self.average)];
        row.extend(self.per_language.values().map(|s| fmt(s.value())));
        format!("{}\n{}\n", header.join("\t"), row.join("\t"))
    }
}

/// Scores each language separately, averages the defined ones, and also
/// reports the pooled score.
pub fn evaluate_by_language(
    task: Task,
    languages: &[String],
    gold: &[f64],
    pred: &[f64],
) -> Result<EvalReport> {
    if languages.len() != gold.len() || gold.len() != pred.len() {
        return Err(Error::InvalidInput(
            "languages, gold and predictions differ in length".into(),
        ));
    }
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((lang, &g), &p) in languages.iter().zip(gold).zip(pred) {
        let e = groups.entry(lang).or_default();
        e.0.push(g);
        e.1.push(p);
    }

    let mut per_language = BTreeMap::new();
    for (lang, (g, p)) in groups {
        let score = if g.len() < 2 {
            Score::Undefined(format!("only {} instance(s)", g.len()))
        } else {
            Score::from_result(task_metric(task, &g, &p))?
        };
        if let Score::Undefined(why) = &score {
            log::warn!("{task} metric undefined for language {lang}: {why}; excluded from AVG");
        }
        per_language.insert(lang.to_string(), score);
    }
    let defined: Vec<f64> = per_language.values().filter_map(Score::value).collect();
    let average = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let pooled = if gold.len() < 2 {
        Score::Undefined("fewer than 2 instances".into())
    } else {
        Score::from_result(task_metric(task, gold, pred))?
    };
    Ok(EvalReport {
        task,
        metric: task.metric_name(),
        per_language,
        average,
        pooled,
    })
}

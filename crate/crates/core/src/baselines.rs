//! Organizer-style baselines: cosine similarity binned into the four median
//! labels with thresholds chosen to maximize ordinal alpha (OGWiC), and ridge
//! regression on `[e1 | e2]` (DisWiC).

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{alpha_from_confusion, Confusion, N_LABELS};

/// Above this many distinct midpoints the candidate set is thinned to
/// this many quantile-spaced midpoints.
pub const MAX_BIN_CANDIDATES: usize = 400;

pub const DEFAULT_RIDGE: f64 = 1e-6;

/// `sim <= t1 -> 1`, `t1 < sim <= t2 -> 2`, `t2 < sim <= t3 -> 3`, `sim > t3 -> 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinThresholds {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Training-set alpha achieved by these thresholds.
    pub alpha: f64,
}

impl BinThresholds {
    pub fn new(t1: f64, t2: f64, t3: f64, alpha: f64) -> Result<Self> {
        let t = Self { t1, t2, t3, alpha };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t1, self.t2, self.t3].iter().all(|t| t.is_finite());
        if !finite || !(self.t1 < self.t2 && self.t2 < self.t3) {
            return Err(Error::InvalidInput(format!(
                "thresholds must be finite and strictly increasing, got ({}, {}, {})",
                self.t1, self.t2, self.t3
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }
}

pub fn apply_bins(similarity: f64, thresholds: &BinThresholds) -> Result<u8> {
    if similarity.is_nan() {
        return Err(Error::InvalidInput("NaN similarity".into()));
    }
    Ok(if similarity <= thresholds.t1 {
        1
    } else if similarity <= thresholds.t2 {
        2
    } else if similarity <= thresholds.t3 {
        3
    } else {
        4
    })
}

/// Candidate boundaries: midpoints between consecutive distinct sorted
/// similarities, thinned to [`MAX_BIN_CANDIDATES`] quantile-spaced ones when
/// there are more.
pub fn bin_candidates(similarities: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = similarities.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mids: Vec<f64> = sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    if mids.len() <= MAX_BIN_CANDIDATES {
        return mids;
    }
    let last = (mids.len() - 1) as f64;
    (0..MAX_BIN_CANDIDATES)
        .map(|j| {
            let pos = (j as f64 * last / (MAX_BIN_CANDIDATES - 1) as f64).round() as usize;
            mids[pos]
        })
        .collect()
}

/// Exhaustive search over increasing candidate triples for the thresholds
/// with maximal training alpha. Ties go to the lexicographically smallest
/// `(t1, t2, t3)`.
pub fn optimize_bins(similarities: &[f64], gold: &[u8]) -> Result<BinThresholds> {
    if similarities.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: similarities.len(),
            found: gold.len(),
        });
    }
    if similarities.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "bin optimization needs at least 4 instances, got {}",
            similarities.len()
        )));
    }
    if similarities.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN similarity".into()));
    }
    let mut class_sims: [Vec<f64>; N_LABELS] = Default::default();
    for (&s, &g) in similarities.iter().zip(gold) {
        if !(1..=4).contains(&g) {
            return Err(Error::InvalidInput(format!("gold label {g} outside 1..=4")));
        }
        class_sims[(g - 1) as usize].push(s);
    }
    if class_sims.iter().filter(|c| !c.is_empty()).count() < 2 {
        return Err(Error::InvalidInput(
            "gold labels must span at least 2 classes".into(),
        ));
    }
    for c in &mut class_sims {
        c.sort_by(f64::total_cmp);
    }

    let candidates = bin_candidates(similarities);
    if candidates.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 distinct similarities for 3 boundaries, got {}",
            candidates.len() + 1
        )));
    }
    // below[i][g]: gold-g instances with similarity <= candidates[i].
    let below: Vec<[u64; N_LABELS]> = candidates
        .iter()
        .map(|&t| std::array::from_fn(|g| class_sims[g].partition_point(|&s| s <= t) as u64))
        .collect();
    let totals: [u64; N_LABELS] = std::array::from_fn(|g| class_sims[g].len() as u64);

    let m = candidates.len();
    let mut best: Option<(f64, usize, usize, usize)> = None;
    let mut conf: Confusion = [[0; N_LABELS]; N_LABELS];
    for i in 0..m - 2 {
        for j in i + 1..m - 1 {
            for k in j + 1..m {
                for g in 0..N_LABELS {
                    conf[g][0] = below[i][g];
                    conf[g][1] = below[j][g] - below[i][g];
                    conf[g][2] = below[k][g] - below[j][g];
                    conf[g][3] = totals[g] - below[k][g];
                }
                let alpha = alpha_from_confusion(&conf)?;
                if best.map_or(true, |(b, ..)| alpha > b) {
                    best = Some((alpha, i, j, k));
                }
            }
        }
    }
    let (alpha, i, j, k) = best.expect("at least one triple");
    BinThresholds::new(candidates[i], candidates[j], candidates[k], alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// In-place Cholesky factorization `a = L L^T`; `a` is overwritten with `L`
/// in its lower triangle. Returns the index of the first non-positive pivot.
fn cholesky_in_place(a: &mut Array2<f64>) -> std::result::Result<(), usize> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        if diag <= 1e-13 * scale {
            return Err(j);
        }
        let l_jj = diag.sqrt();
        a[[j, j]] = l_jj;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / l_jj;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Minimizes `||Xw + b - y||^2 + ridge ||w||^2` (bias unpenalized) through
/// the centred normal equations.
pub fn fit_linreg(x: &Array2<f64>, y: &[f64], ridge: f64) -> Result<LinearModel> {
    let (n, d) = x.dim();
    if n == 0 {
        return Err(Error::InvalidInput("linear regression on zero rows".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if ridge.is_nan() || ridge < 0.0 {
        return Err(Error::InvalidInput(format!("ridge must be >= 0, got {ridge}")));
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = x - &x_mean;
    let yc = Array1::from_iter(y.iter().map(|v| v - y_mean));

    let mut gram = xc.t().dot(&xc);
    for i in 0..d {
        gram[[i, i]] += ridge;
    }
    let rhs = xc.t().dot(&yc);
    if let Err(col) = cholesky_in_place(&mut gram) {
        let hint = if ridge == 0.0 {
            "; use a nonzero ridge penalty"
        } else {
            "; increase the ridge penalty"
        };
        return Err(Error::Singular(format!(
            "normal equations are not positive definite at column {col}{hint}"
        )));
    }
    let w = cholesky_solve(&gram, &rhs);
    let bias = y_mean - x_mean.dot(&w);
    Ok(LinearModel {
        bias,
        weights: w.to_vec(),
    })
}

pub fn predict_linreg(model: &LinearModel, x: &Array2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            found: x.ncols(),
        });
    }
    let w = Array1::from_vec(model.weights.clone());
    Ok(x.dot(&w).iter().map(|v| v + model.bias).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn thresholds() -> BinThresholds {
        BinThresholds::new(0.2, 0.5, 0.8, 0.0).unwrap()
    }

    #[test]
    fn apply_bins_boundaries() {
        let t = thresholds();
        assert_eq!(apply_bins(0.2, &t).unwrap(), 1);
        assert_eq!(apply_bins(0.2000001, &t).unwrap(), 2);
        assert_eq!(apply_bins(0.5, &t).unwrap(), 2);
        assert_eq!(apply_bins(0.8, &t).unwrap(), 3);
        assert_eq!(apply_bins(0.81, &t).unwrap(), 4);
        assert!(apply_bins(f64::NAN, &t).is_err());
    }

    #[test]
    fn apply_bins_monotone_over_sweep() {
        let t = thresholds();
        let labels: Vec<u8> = (0..=1000)
            .map(|i| apply_bins(-0.5 + 2.0 * i as f64 / 1000.0, &t).unwrap())
            .collect();
        assert!(labels.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((labels[0], labels[1000]), (1, 4));
    }

    #[test]
    fn thresholds_must_increase() {
        assert!(BinThresholds::new(0.5, 0.5, 0.8, 0.0).is_err());
        assert!(BinThresholds::from_json(r#"{"t1":0.9,"t2":0.5,"t3":0.8,"alpha":0.1}"#).is_err());
        let t = thresholds();
        assert_eq!(BinThresholds::from_json(&t.to_json().unwrap()).unwrap(), t);
    }

    #[test]
    fn separable_clusters_reach_perfect_alpha() {
        let mut sims = Vec::new();
        let mut gold = Vec::new();
        for label in 1..=4u8 {
            for i in 0..10 {
                sims.push(label as f64 + i as f64 * 0.01);
                gold.push(label);
            }
        }
        let t = optimize_bins(&sims, &gold).unwrap();
        assert_eq!(t.alpha, 1.0);
        for (s, g) in sims.iter().zip(&gold) {
            assert_eq!(apply_bins(*s, &t).unwrap(), *g);
        }
    }

    #[test]
    fn degenerate_inputs_fail() {
        assert!(optimize_bins(&[0.5; 8], &[1, 2, 3, 4, 1, 2, 3, 4]).is_err());
        assert!(optimize_bins(&[0.1, 0.2, 0.3, 0.4], &[2, 2, 2, 2]).is_err());
        assert!(optimize_bins(&[0.1, 0.2, 0.3], &[1, 2, 3]).is_err());
    }

    #[test]
    fn candidates_are_thinned_to_quantiles() {
        let sims: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let c = bin_candidates(&sims);
        assert_eq!(c.len(), MAX_BIN_CANDIDATES);
        assert_eq!((c[0], c[MAX_BIN_CANDIDATES - 1]), (0.5, 998.5));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(bin_candidates(&[3.0, 1.0, 1.0, 2.0]), vec![1.5, 2.5]);
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn exact_affine_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_design(&mut rng, 30, 5);
        let w = [0.5, -1.0, 2.0, 0.0, 3.5];
        let y: Vec<f64> = x.rows().into_iter().map(|r| 1.25 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).collect();
        let model = fit_linreg(&x, &y, 0.0).unwrap();
        let pred = predict_linreg(&model, &x).unwrap();
        let resid = pred.iter().zip(&y).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max);
        assert!(resid <= 1e-8, "{resid}");
        assert!((model.bias - 1.25).abs() < 1e-8);
    }

    #[test]
    fn constant_target_gives_bias_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_design(&mut rng, 20, 4);
        let model = fit_linreg(&x, &[0.75; 20], DEFAULT_RIDGE).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-12));
        assert!((model.bias - 0.75).abs() < 1e-12);
    }

    #[test]
    fn singular_without_ridge_is_reported() {
        // Duplicate column.
        let x = Array2::from_shape_fn((10, 2), |(i, _)| i as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let err = fit_linreg(&x, &y, 0.0).unwrap_err();
        assert!(err.to_string().contains("nonzero ridge"), "{err}");
        assert!(fit_linreg(&x, &y, 1e-3).is_ok());
    }

    #[test]
    fn matches_gradient_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d, ridge) = (50, 10, 0.1);
        let x = random_design(&mut rng, n, d);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let model = fit_linreg(&x, &y, ridge).unwrap();

        // Plain gradient descent on the same objective.
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let lr = 0.01;
        for _ in 0..200_000 {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (row, &t) in x.rows().into_iter().zip(&y) {
                let r = row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b - t;
                for (g, a) in gw.iter_mut().zip(row.iter()) {
                    *g += 2.0 * r * a;
                }
                gb += 2.0 * r;
            }
            for (wi, gi) in w.iter_mut().zip(&gw) {
                *wi -= lr * (gi + 2.0 * ridge * *wi) / n as f64;
            }
            b -= lr * gb / n as f64;
        }
        let oracle = LinearModel { bias: b, weights: w };
        let p1 = predict_linreg(&model, &x).unwrap();
        let p2 = predict_linreg(&oracle, &x).unwrap();
        for (a, c) in p1.iter().zip(&p2) {
            assert!((a - c).abs() < 1e-4, "{a} vs {c}");
        }
    }

    #[test]
    fn nested_noiseless_residual_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_design(&mut rng, 60, 6);
        let y: Vec<f64> = x.rows().into_iter().map(|r| r.sum() * 0.5 - 1.0).collect();
        let mut previous = f64::INFINITY;
        for n in [7, 10, 20, 40, 60] {
            let sub = x.slice(ndarray::s![..n, ..]).to_owned();
            let model = fit_linreg(&sub, &y[..n], DEFAULT_RIDGE).unwrap();
            let full = predict_linreg(&model, &x).unwrap();
            let sse: f64 = full.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum();
            assert!(sse <= previous + 1e-9, "n={n}: {sse} > {previous}");
            assert!(sse < 1e-6);
            previous = sse;
        }
    }

    #[test]
    fn predict_width_mismatch_and_zero_weights() {
        let m = LinearModel { bias: 2.5, weights: vec![0.0; 3] };
        let x = Array2::from_elem((4, 3), 9.0);
        assert_eq!(predict_linreg(&m, &x).unwrap(), vec![2.5; 4]);
        assert!(predict_linreg(&m, &Array2::zeros((1, 2))).is_err());
        let identity = LinearModel { bias: 0.0, weights: vec![1.0] };
        let x = Array2::from_shape_vec((3, 1), vec![-1.0, 0.0, 4.0]).unwrap();
        assert_eq!(predict_linreg(&identity, &x).unwrap(), vec![-1.0, 0.0, 4.0]);
        assert_eq!(LinearModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}

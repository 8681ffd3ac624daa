use ndarray::Array2;

use crate::data::Task;
use crate::error::{Error, Result};

/// Mean softmax cross-entropy over the batch; labels are ratings `1..=4`
/// mapped to classes `0..=3`. Returns the loss and its gradient w.r.t. the
/// logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[f64]) -> Result<(f64, Array2<f64>)> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let mut grad = Array2::zeros((n, k));
    let mut total = 0.0;
    for (i, (row, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        if label.fract() != 0.0 || label < 1.0 || label > k as f64 {
            return Err(Error::InvalidInput(format!("class label {label} outside 1..={k}")));
        }
        let class = label as usize - 1;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum_exp.ln();
        total += log_norm - row[class];
        for (j, z) in row.iter().enumerate() {
            grad[[i, j]] = (z - log_norm).exp() / n as f64;
        }
        grad[[i, class]] -= 1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}

/// Mean squared error of a single-column score matrix.
pub fn mse(scores: &Array2<f64>, targets: &[f64]) -> Result<(f64, Array2<f64>)> {
    let n = scores.nrows();
    if scores.ncols() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: scores.ncols(),
        });
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: targets.len(),
        });
    }
    let mut grad = Array2::zeros((n, 1));
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let r = scores[[i, 0]] - t;
        total += r * r;
        grad[[i, 0]] = 2.0 * r / n as f64;
    }
    Ok((total / n as f64, grad))
}

pub fn task_loss(task: Task, output: &Array2<f64>, targets: &[f64]) -> Result<(f64, Array2<f64>)> {
    match task {
        Task::Ogwic => cross_entropy(output, targets),
        Task::Diswic => mse(output, targets),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln4() {
        let (loss, grad) = cross_entropy(&Array2::zeros((3, 4)), &[1.0, 2.0, 4.0]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!((grad[[0, 0]] - (0.25 - 1.0) / 3.0).abs() < 1e-15);
        assert!((grad[[0, 1]] - 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_batch() {
        // Row 1: logits [ln 2, 0, 0, 0] -> p = [0.4, 0.2, 0.2, 0.2], label 1: -ln 0.4.
        // Row 2: logits [0, 0, ln 3, ln 3] -> p = [0.125, 0.125, 0.375, 0.375], label 4: -ln 0.375.
        let logits = array![[2f64.ln(), 0.0, 0.0, 0.0], [0.0, 0.0, 3f64.ln(), 3f64.ln()]];
        let (loss, grad) = cross_entropy(&logits, &[1.0, 4.0]).unwrap();
        let expected = (-(0.4f64).ln() - (0.375f64).ln()) / 2.0;
        assert!((loss - expected).abs() < 1e-14);
        assert!((grad[[0, 0]] - (0.4 - 1.0) / 2.0).abs() < 1e-14);
        assert!((grad[[1, 3]] - (0.375 - 1.0) / 2.0).abs() < 1e-14);
        assert!(cross_entropy(&logits, &[0.0, 4.0]).is_err());
        assert!(cross_entropy(&logits, &[5.0, 4.0]).is_err());
    }

    #[test]
    fn mse_values() {
        let (loss, _) = mse(&array![[0.5], [1.5]], &[0.5, 1.5]).unwrap();
        assert_eq!(loss, 0.0);
        let (loss, grad) = mse(&array![[1.0], [0.0]], &[0.0, 2.0]).unwrap();
        assert_eq!(loss, 2.5);
        assert_eq!(grad, array![[1.0], [-2.0]]);
    }
}

//! Losses with analytic gradients w.r.t. the predictions.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{FtnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    MeanSquaredError,
}

/// Batch targets: class indices for cross-entropy, reals for MSE
/// (row-major `[B, d_out]`).
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    /// Number of target entries (samples for classes, values for regression).
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Select rows by sample index; `width` is `d_out` for value targets.
    pub fn gather(&self, rows: &[usize], width: usize) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&r| c[r]).collect()),
            Targets::Values(v) => {
                Targets::Values(rows.iter().flat_map(|&r| v[r * width..(r + 1) * width].iter().copied()).collect())
            }
        }
    }
}

fn check_targets(kind: LossKind, preds: &ArrayView2<f64>, targets: &Targets) -> Result<()> {
    let (b, d_out) = preds.dim();
    if b == 0 {
        return Err(FtnError::Data("empty batch".into()));
    }
    match (kind, targets) {
        (LossKind::CrossEntropy, Targets::Classes(c)) => {
            if c.len() != b {
                return Err(FtnError::Data(format!("{} class targets for batch of {b}", c.len())));
            }
            if let Some(bad) = c.iter().find(|&&y| y >= d_out) {
                return Err(FtnError::Data(format!("class target {bad} out of range 0..{d_out}")));
            }
            Ok(())
        }
        (LossKind::MeanSquaredError, Targets::Values(v)) => {
            if v.len() != b * d_out {
                return Err(FtnError::Data(format!(
                    "{} regression targets for predictions of shape [{b}, {d_out}]",
                    v.len()
                )));
            }
            Ok(())
        }
        (kind, _) => Err(FtnError::Data(format!("targets do not match loss {kind:?}"))),
    }
}

/// Mean-over-batch loss and its gradient w.r.t. `preds`.
pub fn loss_and_grad(kind: LossKind, preds: ArrayView2<f64>, targets: &Targets) -> Result<(f64, Array2<f64>)> {
    check_targets(kind, &preds, targets)?;
    let (b, d_out) = preds.dim();
    let mut grad = Array2::<f64>::zeros((b, d_out));
    let mut total = 0.0;
    match targets {
        Targets::Classes(classes) => {
            let inv_b = 1.0 / b as f64;
            for (i, &y) in classes.iter().enumerate() {
                let row = preds.row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = row.iter().map(|&p| (p - max).exp()).sum();
                let lse = max + sum_exp.ln();
                total += lse - row[y];
                for (o, &p) in row.iter().enumerate() {
                    let softmax = (p - max).exp() / sum_exp;
                    let onehot = if o == y { 1.0 } else { 0.0 };
                    grad[[i, o]] = (softmax - onehot) * inv_b;
                }
            }
            Ok((total * inv_b, grad))
        }
        Targets::Values(values) => {
            let n = (b * d_out) as f64;
            for i in 0..b {
                for o in 0..d_out {
                    let diff = preds[[i, o]] - values[i * d_out + o];
                    total += diff * diff;
                    grad[[i, o]] = 2.0 * diff / n;
                }
            }
            Ok((total / n, grad))
        }
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

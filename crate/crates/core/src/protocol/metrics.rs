//! Performance matrices and the continual-learning metrics derived from them.

use serde::{Deserialize, Serialize};

use crate::backbone::Mask;
use crate::error::{FtnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    /// Higher is better.
    Accuracy,
    /// Lower is better.
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalProtocol {
    /// Each task scored under the mask saved when it was trained.
    Stored,
    /// Each task scored under a mask re-derived from a support batch.
    Recovered,
}

/// Lower-triangular score matrix: `rows[i][j]` is the score on task `j`
/// after finishing block `i`, for `j <= i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfMatrix {
    pub kind: ScoreKind,
    pub protocol: EvalProtocol,
    pub rows: Vec<Vec<f64>>,
}

impl PerfMatrix {
    pub fn new(kind: ScoreKind, protocol: EvalProtocol) -> Self {
        Self { kind, protocol, rows: Vec::new() }
    }

    pub fn from_rows(kind: ScoreKind, protocol: EvalProtocol, rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self { kind, protocol, rows };
        m.validate()?;
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(FtnError::Usage(format!("row {} must have {} entries", self.rows.len(), self.rows.len() + 1)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn final_row(&self) -> &[f64] {
        self.rows.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(FtnError::Data(format!("matrix row {i} has {} entries, expected {}", row.len(), i + 1)));
            }
            for &v in row {
                let ok = match self.kind {
                    ScoreKind::Accuracy => (0.0..=1.0).contains(&v),
                    ScoreKind::Mse => v >= 0.0,
                };
                if !ok {
                    return Err(FtnError::Data(format!("score {v} out of range in row {i}")));
                }
            }
        }
        Ok(())
    }

    /// Row = training stage, column = task; upper-triangle cells left empty.
    pub fn to_csv(&self) -> String {
        let n = self.tasks();
        let mut out = String::from("stage");
        for j in 0..n {
            out.push_str(&format!(",task{j}"));
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&i.to_string());
            for j in 0..n {
                out.push(',');
                if let Some(v) = row.get(j) {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// ACC (mean final MSE for regression), FM and BWT of one matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub fm: f64,
    pub bwt: f64,
    /// Set when there is a single task and FM/BWT are reported as 0.
    pub single_task: bool,
}

pub fn compute_metrics(m: &PerfMatrix) -> Result<Metrics> {
    let n = m.tasks();
    if n == 0 {
        return Err(FtnError::Usage("metrics need at least one task".into()));
    }
    m.validate()?;
    let last = m.final_row();
    let acc = last.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Metrics { acc, fm: 0.0, bwt: 0.0, single_task: true });
    }
    let mut fm = 0.0;
    let mut bwt = 0.0;
    for j in 0..n - 1 {
        let peak = (j..n).map(|i| m.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        fm += peak - last[j];
        bwt += last[j] - m.get(j, j);
    }
    let prior = (n - 1) as f64;
    Ok(Metrics { acc, fm: fm / prior, bwt: bwt / prior, single_task: false })
}

/// Split of the gap to an oracle reference into a part lost at training
/// time (overlap) and a part lost when re-deriving masks (recall).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub overlap: f64,
    pub recall: f64,
}

/// Mean of the final row over every task but the last.
pub fn prior_task_mean(m: &PerfMatrix) -> f64 {
    let last = m.final_row();
    let prior = &last[..last.len() - 1];
    prior.iter().sum::<f64>() / prior.len() as f64
}

pub fn decompose_overlap_recall(stored: &PerfMatrix, recovered: &PerfMatrix, oracle_ref: f64) -> Result<Decomposition> {
    if stored.tasks() < 2 || recovered.tasks() != stored.tasks() {
        return Err(FtnError::Usage("decomposition needs two matching matrices with at least two tasks".into()));
    }
    if stored.kind != recovered.kind {
        return Err(FtnError::Usage("decomposition needs matrices of one score kind".into()));
    }
    let (s, r) = (prior_task_mean(stored), prior_task_mean(recovered));
    Ok(match stored.kind {
        ScoreKind::Accuracy => Decomposition { overlap: oracle_ref - s, recall: s - r },
        ScoreKind::Mse => Decomposition { overlap: s - oracle_ref, recall: r - s },
    })
}

/// Fraction of the current mask's active slots that `other` also uses.
pub fn mask_overlap(current: &Mask, other: &Mask) -> Result<f64> {
    if current.len() != other.len() {
        return Err(FtnError::Usage(format!("mask lengths {} and {} differ", current.len(), other.len())));
    }
    let active = current.count();
    if active == 0 {
        return Err(FtnError::Usage("overlap is undefined for an empty current mask".into()));
    }
    let shared = current.gates.iter().zip(&other.gates).filter(|(a, b)| **a && **b).count();
    Ok(shared as f64 / active as f64)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Per-seed metrics and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<Metrics>,
    pub acc: Summary,
    pub fm: Summary,
    pub bwt: Summary,
}

impl MetricsReport {
    pub fn from_seeds(per_seed: Vec<Metrics>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(FtnError::Usage("report needs at least one seed".into()));
        }
        let col = |f: fn(&Metrics) -> f64| Summary::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        Ok(Self { acc: col(|m| m.acc), fm: col(|m| m.fm), bwt: col(|m| m.bwt), per_seed })
    }
}

//! Elastic Weight Consolidation with one anchor per finished task.

use std::io::{Read, Write};

use crate::backbone::bank::{read_tensors, write_tensors};
use crate::backbone::{BankShape, BankTensors, Gates, Mode, NeuronBank, Reduction};
use crate::error::{FtnError, Result};
use crate::numcore::{loss_and_grad, LossKind, RngStream};
use crate::tasks::Batch;

pub const DEFAULT_LAMBDA: f64 = 400.0;
pub const DEFAULT_FISHER_BATCHES: usize = 50;

const ANCHOR_MAGIC: &[u8; 4] = b"EWC1";

/// Parameter snapshot and diagonal Fisher taken at the end of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct EwcAnchor {
    pub task: usize,
    pub theta_star: BankTensors,
    pub fisher: BankTensors,
    pub lambda: f64,
}

/// Mean over samples of squared per-sample gradients of the task loss,
/// evaluated without dropout under `gates`. Slices of inactive neurons get 0.
pub fn estimate_fisher<I>(
    model: &NeuronBank,
    batches: I,
    gates: &[f64],
    loss: LossKind,
    task: usize,
    lambda: f64,
) -> Result<EwcAnchor>
where
    I: IntoIterator<Item = Result<Batch>>,
{
    let mut fisher = BankTensors::zeros(model.shape());
    let mut samples = 0usize;
    let mut unused = RngStream::new(0, 0);
    let gates = Gates::Fixed(gates.to_vec());
    for batch in batches {
        let batch = batch?;
        if batch.is_empty() {
            continue;
        }
        let (y, cache) = model.forward(batch.x.view(), &gates, Mode::Eval, &mut unused)?;
        let (_, mut grad_out) = loss_and_grad(loss, y.view(), &batch.y)?;
        // Mean-loss gradient times B is each sample's own loss gradient.
        grad_out *= batch.len() as f64;
        let squares = model.backward_reduced(&cache, grad_out.view(), Reduction::SumOfSquares)?;
        fisher.add_scaled(&squares.params, 1.0);
        samples += batch.len();
    }
    if samples == 0 {
        return Err(FtnError::Usage("fisher estimate needs at least one sample".into()));
    }
    fisher.scale(1.0 / samples as f64);
    Ok(EwcAnchor { task, theta_star: model.params().clone(), fisher, lambda })
}

/// `sum_a (lambda_a / 2) sum_i F_i (theta_i - theta*_i)^2` and its gradient.
pub fn ewc_penalty_grad(model: &NeuronBank, anchors: &[EwcAnchor]) -> (f64, BankTensors) {
    let mut grad = BankTensors::zeros(model.shape());
    let mut penalty = 0.0;
    for a in anchors {
        for (((g, theta), star), f) in
            grad.slices_mut().into_iter().zip(model.params().slices()).zip(a.theta_star.slices()).zip(a.fisher.slices())
        {
            for i in 0..g.len() {
                let delta = theta[i] - star[i];
                penalty += 0.5 * a.lambda * f[i] * delta * delta;
                g[i] += a.lambda * f[i] * delta;
            }
        }
    }
    (penalty, grad)
}

impl EwcAnchor {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(ANCHOR_MAGIC)?;
        w.write_all(&(self.task as u64).to_le_bytes())?;
        w.write_all(&self.lambda.to_le_bytes())?;
        write_tensors(&self.theta_star, &mut w)?;
        write_tensors(&self.fisher, &mut w)?;
        Ok(())
    }

    pub fn read_from<R: Read>(shape: &BankShape, mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != ANCHOR_MAGIC {
            return Err(FtnError::Data(format!("bad anchor magic {magic:?}")));
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let task = u64::from_le_bytes(b) as usize;
        r.read_exact(&mut b)?;
        let lambda = f64::from_le_bytes(b);
        let mut theta_star = BankTensors::zeros(shape);
        read_tensors(&mut theta_star, &mut r)?;
        let mut fisher = BankTensors::zeros(shape);
        read_tensors(&mut fisher, &mut r)?;
        Ok(Self { task, theta_star, fisher, lambda })
    }
}

//! The three-stage mask configurer and the static masks.

use ndarray::{Array2, ArrayView2};

use super::kwta::kwta;
use super::smooth::lateral_smooth;
use super::spec::{ConfigurerSpec, Variant};
use crate::backbone::{sigmoid, Mask, NeuronBank, Provenance};
use crate::error::{FtnError, Result};
use crate::numcore::{loss_and_grad, AdamState, LossKind, Targets};

/// Logits after the gradient stage (before smoothing), kept for inspection.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub logits: Vec<f64>,
    pub losses: Vec<f64>,
}

/// Stage 1: `steps` Adam updates on mask logits that start at zero, through
/// the relaxed eval-mode forward pass. A fresh Adam state is used per call
/// and the model is only read.
pub fn propose_logits(
    model: &NeuronBank,
    x: ArrayView2<f64>,
    targets: &Targets,
    loss: LossKind,
    steps: usize,
    lr: f64,
) -> Result<Proposal> {
    let h = model.neurons();
    let w_out = &model.params().w_out;
    // A neuron with an all-zero readout column adds exact zeros to the output
    // and gets an exact zero gradient, so it is skipped.
    let live: Vec<usize> = (0..h).filter(|&k| w_out.column(k).iter().any(|&w| w != 0.0)).collect();
    // The model is frozen and dropout is off, so the neuron outputs are the
    // same at every step and only the readout has to be recomputed.
    let z = model.neuron_outputs(x, &live)?;
    let (b, d_out) = (z.ncols(), w_out.nrows());

    let mut logits = vec![0.0; h];
    let mut adam = AdamState::new(h, lr);
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let gates: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let y = model.readout(&z, &live, &gates);
        let (value, grad_out) = loss_and_grad(loss, y.view(), targets)?;
        if !value.is_finite() {
            return Err(FtnError::Numerical(format!("configurer loss is {value}")));
        }
        losses.push(value);
        let mut grad = vec![0.0; h];
        for (k, g) in live.iter().zip(logit_gradient(&z, &live, w_out, &grad_out, &gates, b, d_out)) {
            grad[*k] = g;
        }
        adam.step(&mut logits, &grad)?;
    }
    Ok(Proposal { logits, losses })
}

/// `dL/dlogit_k = sum_b (W_out^T dL/dy)[b, k] z[k, b] * sigma'(logit_k)`,
/// accumulated in the same order as the model's backward pass. Row `a` of `z`
/// belongs to neuron `active[a]`.
fn logit_gradient(
    z: &Array2<f64>,
    active: &[usize],
    w_out: &Array2<f64>,
    grad_out: &Array2<f64>,
    gates: &[f64],
    b: usize,
    d_out: usize,
) -> Vec<f64> {
    active
        .iter()
        .enumerate()
        .map(|(a, &k)| {
            let mut d_u = vec![0.0; b];
            for o in 0..d_out {
                let w = w_out[[o, k]];
                for (i, du) in d_u.iter_mut().enumerate() {
                    *du += grad_out[[i, o]] * w;
                }
            }
            let gate_grad: f64 = d_u.iter().zip(z.row(a).iter()).map(|(du, zk)| du * zk).sum();
            gate_grad * gates[k] * (1.0 - gates[k])
        })
        .collect()
}

/// Gradient proposal, `T` toroidal smoothing passes, then KWTA.
pub fn configure_mask(
    model: &NeuronBank,
    x: ArrayView2<f64>,
    targets: &Targets,
    spec: &ConfigurerSpec,
    loss: LossKind,
) -> Result<Mask> {
    if !spec.variant.is_adaptive() {
        return Err(FtnError::Usage(format!("{} does not configure masks", spec.variant)));
    }
    if x.nrows() == 0 {
        return Err(FtnError::Usage("configurer needs a nonempty batch".into()));
    }
    let proposal = propose_logits(model, x, targets, loss, spec.reconfig_steps, spec.reconfig_lr)?;
    finish_mask(&proposal.logits, model.shape().side, spec)
}

/// Stages 2 and 3 on an already proposed logit field.
pub fn finish_mask(logits: &[f64], side: usize, spec: &ConfigurerSpec) -> Result<Mask> {
    let field = lateral_smooth(logits, side, spec.kernel, spec.lateral_steps)?;
    let gates = kwta(&field, spec.k)?;
    Ok(Mask { side, logits: field, gates, provenance: Provenance::Configured })
}

/// Masks that ignore the data: disjoint blocks for `fixed-mask`, the first
/// block for `no-mask` and `ewc`, everything for `all-ones`.
pub fn static_mask(variant: Variant, side: usize, k: usize, task: usize) -> Result<Mask> {
    let h = side * side;
    if k == 0 || k > h {
        return Err(FtnError::Config(format!("k = {k} outside 1..={h}")));
    }
    let (range, provenance) = match variant {
        Variant::FixedMask => {
            let needed = (task + 1) * k;
            if needed > h {
                return Err(FtnError::Capacity { task, needed, available: h });
            }
            (task * k..needed, Provenance::FixedBlock(task))
        }
        Variant::NoMask | Variant::Ewc => (0..k, Provenance::SingleBlock),
        Variant::AllOnes => (0..h, Provenance::AllOnes),
        other => return Err(FtnError::Usage(format!("{other} has no static mask"))),
    };
    let gates = (0..h).map(|i| range.contains(&i)).collect();
    Mask::from_gates(side, gates, provenance)
}

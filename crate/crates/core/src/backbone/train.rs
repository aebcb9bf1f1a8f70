use ndarray::ArrayView2;

use super::bank::{BankTensors, NeuronBank, TENSOR_COUNT};
use super::forward::{Gates, Gradients, Mode};
use crate::error::{FtnError, Result};
use crate::numcore::{loss_and_grad, AdamState, LossKind, RngStream, Targets};

/// One Adam state per bank tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptimizer {
    states: Vec<AdamState>,
}

impl ModelOptimizer {
    pub fn new(model: &NeuronBank, lr: f64) -> Self {
        let states = model.params().lens().iter().map(|&n| AdamState::new(n, lr)).collect();
        Self { states }
    }

    pub fn reset(&mut self) {
        self.states.iter_mut().for_each(AdamState::reset);
    }

    pub fn step_count(&self) -> u64 {
        self.states[0].step_count()
    }

    pub fn apply(&mut self, model: &mut NeuronBank, grads: &BankTensors) -> Result<()> {
        let params = model.params_mut();
        for ((state, p), g) in self.states.iter_mut().zip(params.slices_mut()).zip(grads.slices()) {
            state.step(p, g)?;
        }
        debug_assert_eq!(self.states.len(), TENSOR_COUNT);
        Ok(())
    }
}

/// Forward in train mode, loss, and backward. The mask must be binary.
pub fn compute_gradients(
    model: &NeuronBank,
    x: ArrayView2<f64>,
    targets: &Targets,
    gates: &[f64],
    loss: LossKind,
    dropout: f64,
    rng: &mut RngStream,
) -> Result<(f64, Gradients)> {
    if gates.iter().any(|&g| g != 0.0 && g != 1.0) {
        return Err(FtnError::Usage("training requires a binary mask".into()));
    }
    let (y, cache) = model.forward(x, &Gates::Fixed(gates.to_vec()), Mode::Train { dropout }, rng)?;
    let (value, grad_out) = loss_and_grad(loss, y.view(), targets)?;
    if !value.is_finite() {
        return Err(FtnError::Numerical(format!("training loss is {value}")));
    }
    let grads = model.backward(&cache, grad_out.view())?;
    Ok((value, grads))
}

/// One Adam step on every model tensor under a frozen binary mask. Returns
/// the batch loss.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &mut NeuronBank,
    x: ArrayView2<f64>,
    targets: &Targets,
    gates: &[f64],
    loss: LossKind,
    dropout: f64,
    opt: &mut ModelOptimizer,
    rng: &mut RngStream,
) -> Result<f64> {
    let (value, grads) = compute_gradients(model, x, targets, gates, loss, dropout, rng)?;
    opt.apply(model, &grads.params)?;
    Ok(value)
}

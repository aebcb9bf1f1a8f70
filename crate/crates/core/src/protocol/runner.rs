//! Block-sequential training with stored and recovered evaluation.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, EvalProtocol, Metrics, PerfMatrix, ScoreKind};
use crate::backbone::{compute_gradients, Gates, Mask, ModelOptimizer, NeuronBank};
use crate::baselines::{estimate_fisher, ewc_penalty_grad, EwcAnchor};
use crate::config::{Experiment, ExperimentConfig};
use crate::configurer::{configure_mask, static_mask, ConfigurerSpec, Schedule, Variant};
use crate::error::{FtnError, Result};
use crate::numcore::{argmax, LossKind, RngStream, StreamId, Targets};
use crate::tasks::{load_mnist_idx, EvalSet, MnistData, SyntheticKind, SyntheticSpec, TaskStream};

/// Everything needed to regenerate a table cell for one (config, seed).
/// Contains no timings, so reruns serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub stored_masks: Vec<Mask>,
    pub stored: PerfMatrix,
    pub recovered: PerfMatrix,
    pub metrics_stored: Metrics,
    pub metrics_recovered: Metrics,
    /// Mean training loss over each block.
    pub block_loss: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub block_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub model: NeuronBank,
    pub anchors: Vec<EwcAnchor>,
    pub timing: Timing,
}

pub fn score_kind(loss: LossKind) -> ScoreKind {
    match loss {
        LossKind::CrossEntropy => ScoreKind::Accuracy,
        LossKind::MeanSquaredError => ScoreKind::Mse,
    }
}

/// Accuracy (argmax, lowest index on ties) or mean squared error of the
/// eval-mode model under `gates` over the scoring part of `set`.
pub fn score_set(model: &NeuronBank, gates: &[f64], set: &EvalSet, kind: ScoreKind, chunk: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(FtnError::Usage("empty scoring set".into()));
    }
    let gates = Gates::Fixed(gates.to_vec());
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..set.chunk_count(chunk) {
        let batch = set.chunk(c, chunk);
        let y = model.predict(batch.x.view(), &gates)?;
        match (&batch.y, kind) {
            (Targets::Classes(labels), ScoreKind::Accuracy) => {
                for (row, &label) in y.rows().into_iter().zip(labels) {
                    let row: Vec<f64> = row.to_vec();
                    total += f64::from(u8::from(argmax(&row) == label));
                }
                count += labels.len();
            }
            (Targets::Values(values), ScoreKind::Mse) => {
                for (p, t) in y.iter().zip(values) {
                    total += (p - t) * (p - t);
                }
                count += values.len();
            }
            _ => return Err(FtnError::Usage("score kind does not match the targets".into())),
        }
    }
    Ok(total / count as f64)
}

/// Score each task under the mask stored for it.
pub fn eval_stored(
    model: &NeuronBank,
    masks: &[Mask],
    sets: &[EvalSet],
    kind: ScoreKind,
    chunk: usize,
) -> Result<Vec<f64>> {
    if masks.len() < sets.len() {
        return Err(FtnError::Usage(format!("{} stored masks for {} tasks", masks.len(), sets.len())));
    }
    sets.iter().zip(masks).map(|(set, m)| score_set(model, &m.gate_values(), set, kind, chunk)).collect()
}

/// Score each task under a mask re-derived from that task's support batch
/// alone. Static variants regenerate their fixed masks instead.
pub fn eval_recovered(
    model: &NeuronBank,
    spec: &ConfigurerSpec,
    sets: &[EvalSet],
    loss: LossKind,
    chunk: usize,
) -> Result<(Vec<f64>, Vec<Mask>)> {
    let side = model.shape().side;
    let mut scores = Vec::with_capacity(sets.len());
    let mut masks = Vec::with_capacity(sets.len());
    for (j, set) in sets.iter().enumerate() {
        let mask = if spec.variant.is_adaptive() {
            configure_mask(model, set.support.x.view(), &set.support.y, spec, loss)?
        } else {
            static_mask(spec.variant, side, spec.k, j)?
        };
        scores.push(score_set(model, &mask.gate_values(), set, score_kind(loss), chunk)?);
        masks.push(mask);
    }
    Ok((scores, masks))
}

/// Held-out sets and training streams for one (config, seed).
pub struct TaskSuite {
    pub eval: Vec<EvalSet>,
    pub train: Vec<TaskStream>,
}

impl TaskSuite {
    pub fn build(cfg: &ExperimentConfig, seed: u64, mnist: Option<Arc<MnistData>>) -> Result<Self> {
        let s = &cfg.schedule;
        let mut eval = Vec::with_capacity(s.tasks);
        let mut train = Vec::with_capacity(s.tasks);
        match cfg.experiment {
            Experiment::SyntheticClf | Experiment::SyntheticReg => {
                let kind = if cfg.experiment == Experiment::SyntheticClf {
                    SyntheticKind::Classification
                } else {
                    SyntheticKind::Regression
                };
                let spec = Arc::new(SyntheticSpec::new(seed, kind));
                for t in 0..s.tasks {
                    eval.push(EvalSet::synthetic(&spec, t, seed, s.eval_batch, s.support_batch)?);
                    train.push(TaskStream::synthetic(spec.clone(), t, seed, s.batch));
                }
            }
            Experiment::MnistShuffled | Experiment::PermutedMnist => {
                let data = mnist.ok_or_else(|| FtnError::Data("MNIST data not loaded".into()))?;
                for t in 0..s.tasks {
                    let stream = if cfg.experiment == Experiment::MnistShuffled {
                        TaskStream::shuffled_labels(data.clone(), t, seed, s.batch)
                    } else {
                        TaskStream::permuted_pixels(data.clone(), t, seed, s.batch)
                    };
                    eval.push(EvalSet::mnist(data.clone(), t, seed, stream.transform.clone(), s.support_batch));
                    train.push(stream);
                }
            }
        }
        Ok(Self { eval, train })
    }
}

/// Load MNIST if `cfg` needs it.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Option<Arc<MnistData>>> {
    if cfg.experiment.is_synthetic() {
        return Ok(None);
    }
    Ok(Some(Arc::new(load_mnist_idx(&cfg.resolved_data_dir())?)))
}

/// Train one seed through every task block and evaluate after each block.
pub fn run_cell(cfg: &ExperimentConfig, seed: u64, mnist: Option<Arc<MnistData>>) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let shape = cfg.bank_shape()?;
    let spec = cfg.configurer_spec()?;
    let loss = cfg.experiment.loss();
    let kind = score_kind(loss);
    let s = cfg.schedule.clone();
    let dropout = cfg.model.dropout;
    let chunk = s.eval_batch;
    let variant = cfg.variant;
    let label = format!("{} {} seed {seed}", cfg.experiment, variant);

    let mut model = NeuronBank::init_with_gain(shape, cfg.init_gain(), &mut RngStream::new(seed, StreamId::Init.id()))?;
    let mut opt = ModelOptimizer::new(&model, cfg.model.lr);
    let mut dropout_rng = RngStream::new(seed, StreamId::Dropout.id());
    let TaskSuite { eval, train } = TaskSuite::build(cfg, seed, mnist)?;

    let mut stored_masks: Vec<Mask> = Vec::with_capacity(s.tasks);
    let mut anchors: Vec<EwcAnchor> = Vec::new();
    let mut stored = PerfMatrix::new(kind, EvalProtocol::Stored);
    let mut recovered = PerfMatrix::new(kind, EvalProtocol::Recovered);
    let mut block_loss = Vec::with_capacity(s.tasks);
    let mut timing = Timing::default();

    for (t, mut stream) in train.into_iter().enumerate() {
        let block_start = Instant::now();
        opt.reset();
        let mut reconfig = stream.clone().reseeded(seed, StreamId::Reconfig);
        reconfig.batch_size = s.reconfig_batch;
        let fixed = if variant.is_adaptive() { None } else { Some(static_mask(variant, shape.side, cfg.model.k, t)?) };
        let mut mask = fixed.clone();
        let mut loss_sum = 0.0;
        for _epoch in 0..s.epochs {
            for step in 0..s.steps_per_epoch {
                let due = match spec.schedule {
                    Schedule::PerBatch => true,
                    Schedule::PerEpoch => step == 0,
                };
                if variant.is_adaptive() && due {
                    let rb = reconfig.next_batch()?;
                    mask = Some(configure_mask(&model, rb.x.view(), &rb.y, &spec, loss)?);
                }
                let gates = mask.as_ref().expect("mask set before first step").gate_values();
                let batch = stream.next_batch()?;
                let (value, mut grads) =
                    compute_gradients(&model, batch.x.view(), &batch.y, &gates, loss, dropout, &mut dropout_rng)?;
                if variant == Variant::Ewc {
                    let (_, penalty) = ewc_penalty_grad(&model, &anchors);
                    grads.params.add_scaled(&penalty, 1.0);
                }
                opt.apply(&mut model, &grads.params)?;
                loss_sum += value;
            }
        }
        let final_mask = mask.expect("at least one step per block");
        block_loss.push(loss_sum / (s.epochs * s.steps_per_epoch) as f64);

        if variant == Variant::Ewc {
            let mut fisher_stream = stream.clone().reseeded(seed, StreamId::Fisher);
            fisher_stream.batch_size = cfg.ewc.fisher_batch;
            let batches = (0..cfg.ewc.fisher_batches).map(|_| fisher_stream.next_batch());
            anchors.push(estimate_fisher(&model, batches, &final_mask.gate_values(), loss, t, cfg.ewc.lambda)?);
        }
        stored_masks.push(final_mask);

        let seen = &eval[..=t];
        let stored_row = eval_stored(&model, &stored_masks, seen, kind, chunk)?;
        let recovered_row = if variant.is_adaptive() {
            eval_recovered(&model, &spec, seen, loss, chunk)?.0
        } else {
            stored_row.clone()
        };
        log::info!(
            "{label}: block {}/{} loss {:.4}, task {t} stored {:.4} recovered {:.4}",
            t + 1,
            s.tasks,
            block_loss[t],
            stored_row[t],
            recovered_row[t]
        );
        stored.push_row(stored_row)?;
        recovered.push_row(recovered_row)?;
        timing.block_seconds.push(block_start.elapsed().as_secs_f64());
    }

    let metrics_stored = compute_metrics(&stored)?;
    let metrics_recovered = compute_metrics(&recovered)?;
    timing.total_seconds = started.elapsed().as_secs_f64();
    let record = RunRecord {
        config: cfg.clone(),
        seed,
        stored_masks,
        stored,
        recovered,
        metrics_stored,
        metrics_recovered,
        block_loss,
    };
    Ok(RunOutcome { record, model, anchors, timing })
}

/// Every seed of `cfg`, one after another.
pub fn run_block_sequential(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let data = load_data(cfg)?;
    cfg.seeds.iter().map(|&seed| run_cell(cfg, seed, data.clone()).map(|o| o.record)).collect()
}

use ndarray::Array2;
use proptest::prelude::*;

use ftn::backbone::{BankShape, BankTensors, Gates, Mode, NeuronBank};
use ftn::baselines::{estimate_fisher, ewc_penalty_grad, EwcAnchor};
use ftn::config::{Experiment, ExperimentConfig, Preset};
use ftn::configurer::Variant;
use ftn::numcore::{loss_and_grad, LossKind, RngStream, Targets};
use ftn::protocol::run_cell;
use ftn::tasks::Batch;

fn random_model(seed: u64, d_out: usize) -> NeuronBank {
    let shape = BankShape { side: 2, layers: 2, inner: 3, d_in: 4, d_out };
    NeuronBank::init(shape, &mut RngStream::new(seed, 0)).unwrap()
}

fn random_batch(rng: &mut RngStream, n: usize, loss: LossKind, d_out: usize) -> Batch {
    let x = Array2::from_shape_vec((n, 4), rng.uniform(n * 4, -1.0, 1.0)).unwrap();
    let y = match loss {
        LossKind::CrossEntropy => Targets::Classes((0..n).map(|_| rng.below(d_out)).collect()),
        LossKind::MeanSquaredError => Targets::Values(rng.uniform(n * d_out, -1.0, 1.0)),
    };
    Batch { x, y }
}

/// One backward pass per sample, squared and averaged.
fn fisher_oracle(model: &NeuronBank, batch: &Batch, gates: &[f64], loss: LossKind) -> BankTensors {
    let mut total = BankTensors::zeros(model.shape());
    let n = batch.len();
    for i in 0..n {
        let one = batch.rows(i..i + 1);
        let (y, cache) =
            model.forward(one.x.view(), &Gates::Fixed(gates.to_vec()), Mode::Eval, &mut RngStream::new(0, 0)).unwrap();
        let (_, g) = loss_and_grad(loss, y.view(), &one.y).unwrap();
        let grads = model.backward(&cache, g.view()).unwrap().params;
        for (t, s) in total.slices_mut().into_iter().zip(grads.slices()) {
            for (a, b) in t.iter_mut().zip(s) {
                *a += b * b;
            }
        }
    }
    total.scale(1.0 / n as f64);
    total
}

#[test]
fn fisher_matches_per_sample_oracle() {
    for (loss, d_out) in [(LossKind::CrossEntropy, 3), (LossKind::MeanSquaredError, 2)] {
        let model = random_model(7, d_out);
        let mut rng = RngStream::new(8, 0);
        let batch = random_batch(&mut rng, 3, loss, d_out);
        let gates = [1.0, 0.0, 1.0, 1.0];
        let anchor = estimate_fisher(&model, [Ok(batch.clone())], &gates, loss, 0, 400.0).unwrap();
        let expected = fisher_oracle(&model, &batch, &gates, loss);
        for (a, b) in anchor.fisher.slices().iter().zip(expected.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-14 * y.abs().max(1e-3), "{loss:?}: {x} vs {y}");
            }
        }
        // Neuron 1 is masked out: every one of its entries is zero.
        assert!(anchor.fisher.neuron_values(1).iter().all(|&v| v == 0.0));
        assert_eq!(anchor.theta_star, *model.params());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fisher_is_nonnegative(seed in any::<u64>(), ce in any::<bool>(), n in 1usize..20) {
        let (loss, d_out) = if ce { (LossKind::CrossEntropy, 3) } else { (LossKind::MeanSquaredError, 2) };
        let model = random_model(seed, d_out);
        let mut rng = RngStream::new(seed, 1);
        let batches: Vec<_> = (0..3).map(|_| Ok(random_batch(&mut rng, n, loss, d_out))).collect();
        let anchor = estimate_fisher(&model, batches, &[1.0; 4], loss, 0, 1.0).unwrap();
        for s in anchor.fisher.slices() {
            prop_assert!(s.iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }
}

#[test]
fn penalty_closed_form() {
    let mut model = random_model(1, 2);
    let star = model.params().clone();
    let mut fisher = BankTensors::zeros(model.shape());
    fisher.slices_mut()[2][5] = 3.0;
    let anchor = EwcAnchor { task: 0, theta_star: star.clone(), fisher, lambda: 400.0 };

    let (p, g) = ewc_penalty_grad(&model, std::slice::from_ref(&anchor));
    assert_eq!(p, 0.0);
    assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));

    // Dyadic values keep every product exact.
    model.params_mut().slices_mut()[2][5] = 0.5;
    let mut anchor = anchor;
    anchor.theta_star.slices_mut()[2][5] = 0.25;
    let (p, g) = ewc_penalty_grad(&model, &[anchor.clone()]);
    let delta: f64 = 0.25;
    assert_eq!(p, 400.0 * 3.0 * delta * delta / 2.0);
    assert_eq!(g.slices()[2][5], 400.0 * 3.0 * delta);
    let nonzero: usize = g.slices().iter().map(|s| s.iter().filter(|&&v| v != 0.0).count()).sum();
    assert_eq!(nonzero, 1);

    // Two anchors add.
    let (p2, g2) = ewc_penalty_grad(&model, &[anchor.clone(), anchor]);
    assert_eq!((p2, g2.slices()[2][5]), (2.0 * p, 2.0 * g.slices()[2][5]));
    assert_eq!(ewc_penalty_grad(&model, &[]).0, 0.0);
}

#[test]
fn zero_lambda_reproduces_no_mask_bitwise() {
    let mut base = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::NoMask, Preset::Desk);
    base.schedule.steps_per_epoch = 20;
    base.schedule.eval_batch = 512;
    base.ewc.fisher_batches = 2;
    let mut ewc = base.clone();
    ewc.variant = Variant::Ewc;
    ewc.ewc.lambda = 0.0;

    let a = run_cell(&base, 4, None).unwrap();
    let b = run_cell(&ewc, 4, None).unwrap();
    assert_eq!(b.anchors.len(), 3);
    let bits = |rows: &Vec<Vec<f64>>| rows.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.record.stored.rows), bits(&b.record.stored.rows));
    assert_eq!(bits(&a.record.recovered.rows), bits(&b.record.recovered.rows));
    assert_eq!(
        a.record.block_loss.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.record.block_loss.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.record.stored_masks, b.record.stored_masks);
    let all: Vec<usize> = (0..a.model.neurons()).collect();
    assert_eq!(a.model.fingerprint(&all), b.model.fingerprint(&all));

    // A positive weight does change the trajectory.
    ewc.ewc.lambda = 400.0;
    let c = run_cell(&ewc, 4, None).unwrap();
    assert_ne!(a.model.fingerprint(&all), c.model.fingerprint(&all));
}

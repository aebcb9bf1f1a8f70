//! Training under one mask leaves the slices of a disjoint mask untouched,
//! provided Adam's moments are cleared in between.

use ndarray::Array2;
use proptest::prelude::*;

use ftn::backbone::{active_set, train_step, BankShape, Gates, ModelOptimizer, NeuronBank};
use ftn::numcore::{LossKind, RngStream, Targets};

struct Setup {
    model: NeuronBank,
    opt: ModelOptimizer,
    rng: RngStream,
    loss: LossKind,
    d_out: usize,
}

impl Setup {
    fn new(seed: u64, loss: LossKind) -> Self {
        let d_out = if loss == LossKind::CrossEntropy { 3 } else { 2 };
        let shape = BankShape { side: 4, layers: 3, inner: 4, d_in: 5, d_out };
        let mut rng = RngStream::new(seed, 0);
        let model = NeuronBank::init(shape, &mut rng).unwrap();
        let opt = ModelOptimizer::new(&model, 1e-2);
        Self { model, opt, rng, loss, d_out }
    }

    fn batch(&mut self, n: usize) -> (Array2<f64>, Targets) {
        let x = Array2::from_shape_vec((n, 5), self.rng.uniform(n * 5, -1.0, 1.0)).unwrap();
        let y = match self.loss {
            LossKind::CrossEntropy => Targets::Classes((0..n).map(|_| self.rng.below(self.d_out)).collect()),
            LossKind::MeanSquaredError => Targets::Values(self.rng.uniform(n * self.d_out, -1.0, 1.0)),
        };
        (x, y)
    }

    fn train(&mut self, gates: &[f64], steps: usize) {
        for _ in 0..steps {
            let (x, y) = self.batch(8);
            let mut drop = self.rng.clone();
            train_step(&mut self.model, x.view(), &y, gates, self.loss, 0.2, &mut self.opt, &mut drop).unwrap();
            self.rng.skip(1 << 20);
        }
    }
}

fn gates_for(support: &[usize], h: usize) -> Vec<f64> {
    (0..h).map(|k| if support.contains(&k) { 1.0 } else { 0.0 }).collect()
}

/// Splits a shuffled neuron order into two disjoint nonempty masks.
fn disjoint_masks(order: &[usize], split: usize, len_b: usize) -> (Vec<usize>, Vec<usize>) {
    let a = order[..split].to_vec();
    let b = order[split..split + len_b].to_vec();
    (a, b)
}

struct Observed {
    fingerprint: String,
    outputs: Array2<f64>,
}

fn observe(model: &NeuronBank, a: &[usize], probe: &Array2<f64>) -> Observed {
    let gates = Gates::Fixed(gates_for(a, model.neurons()));
    Observed { fingerprint: model.fingerprint(a), outputs: model.predict(probe.view(), &gates).unwrap() }
}

/// Returns whether A's slices and outputs came through B's training intact.
fn survives(seed: u64, loss: LossKind, a: &[usize], b: &[usize], reset: bool) -> bool {
    let mut s = Setup::new(seed, loss);
    let h = s.model.neurons();
    s.train(&gates_for(a, h), 20);
    let (probe, _) = s.batch(32);
    let before = observe(&s.model, a, &probe);
    if reset {
        s.opt.reset();
    }
    s.train(&gates_for(b, h), 200);
    let after = observe(&s.model, a, &probe);
    let bits = |m: &Array2<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    before.fingerprint == after.fingerprint && bits(&before.outputs) == bits(&after.outputs)
}

#[test]
fn disjoint_training_is_bitwise_inert_after_reset() {
    let a: Vec<usize> = vec![0, 1, 5, 10];
    let b: Vec<usize> = vec![2, 3, 6, 7, 15];
    for loss in [LossKind::CrossEntropy, LossKind::MeanSquaredError] {
        assert!(survives(1, loss, &a, &b, true), "{loss:?}");
    }
}

#[test]
fn stale_moments_move_the_old_slices() {
    let a: Vec<usize> = vec![0, 1, 5, 10];
    let b: Vec<usize> = vec![2, 3, 6, 7, 15];
    for loss in [LossKind::CrossEntropy, LossKind::MeanSquaredError] {
        assert!(!survives(1, loss, &a, &b, false), "{loss:?}");
    }
}

#[test]
fn outputs_under_b_do_not_read_a() {
    let mut s = Setup::new(3, LossKind::CrossEntropy);
    let h = s.model.neurons();
    let b = [4, 8, 9];
    let (probe, _) = s.batch(16);
    let before = s.model.predict(probe.view(), &Gates::Fixed(gates_for(&b, h))).unwrap();
    s.train(&gates_for(&[0, 1, 2], h), 30);
    let after = s.model.predict(probe.view(), &Gates::Fixed(gates_for(&b, h))).unwrap();
    assert_eq!(before, after);
    assert_eq!(active_set(&gates_for(&b, h)), b.to_vec());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn any_disjoint_pair(
        order in Just((0..16).collect::<Vec<usize>>()).prop_shuffle(),
        split in 1usize..8,
        len_b in 1usize..8,
        ce in any::<bool>(),
        seed in 0u64..10_000,
    ) {
        let (a, b) = disjoint_masks(&order, split, len_b);
        let loss = if ce { LossKind::CrossEntropy } else { LossKind::MeanSquaredError };
        prop_assert!(survives(seed, loss, &a, &b, true));
    }
}

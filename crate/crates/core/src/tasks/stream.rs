//! Per-task training streams and held-out evaluation sets.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::idx::MnistData;
use super::synthetic::{synthetic_batch, SyntheticSpec};
use super::Batch;
use crate::error::Result;
use crate::numcore::{RngStream, StreamId, Targets};

pub const MNIST_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Synthetic,
    /// `new_label = perm[old_label]`.
    LabelPermutation(Vec<usize>),
    /// `new_image[i] = old_image[perm[i]]`.
    PixelPermutation(Vec<usize>),
}

fn seeded_permutation(n: usize, seed: u64, task: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    if task > 0 {
        let mut rng = RngStream::new(seed, StreamId::Permutation.for_task(task));
        perm.shuffle(&mut rng);
    }
    perm
}

/// `pi_t` over the ten digit classes; identity for task 0.
pub fn label_permutation(seed: u64, task: usize) -> Vec<usize> {
    seeded_permutation(MNIST_CLASSES, seed, task)
}

/// `rho_t` over pixel indices; identity for task 0.
pub fn pixel_permutation(seed: u64, task: usize, pixels: usize) -> Vec<usize> {
    seeded_permutation(pixels, seed, task)
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub fn permute_pixels(image: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&p| image[p]).collect()
}

/// Rows `indices` of `images`/`labels` with `transform` applied.
pub fn gather_mnist(images: &Array2<f64>, labels: &[u8], indices: &[usize], transform: &Transform) -> Batch {
    let width = images.ncols();
    let mut x = Array2::zeros((indices.len(), width));
    for (r, &i) in indices.iter().enumerate() {
        let src = images.row(i);
        let mut dst = x.row_mut(r);
        match transform {
            Transform::PixelPermutation(perm) => {
                for (d, &p) in dst.iter_mut().zip(perm) {
                    *d = src[p];
                }
            }
            _ => dst.assign(&src),
        }
    }
    let y = indices
        .iter()
        .map(|&i| {
            let l = labels[i] as usize;
            match transform {
                Transform::LabelPermutation(perm) => perm[l],
                _ => l,
            }
        })
        .collect();
    Batch { x, y: Targets::Classes(y) }
}

#[derive(Debug, Clone)]
enum Source {
    Synthetic(Arc<SyntheticSpec>),
    Mnist { data: Arc<MnistData>, order: Vec<usize>, cursor: usize },
}

/// Training batches for one task. Synthetic streams draw fresh samples;
/// MNIST streams walk the training split in a reshuffled order each epoch.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub task: usize,
    pub transform: Transform,
    pub batch_size: usize,
    source: Source,
    rng: RngStream,
    epoch: usize,
}

impl TaskStream {
    pub fn synthetic(spec: Arc<SyntheticSpec>, task: usize, seed: u64, batch_size: usize) -> Self {
        Self {
            task,
            transform: Transform::Synthetic,
            batch_size,
            source: Source::Synthetic(spec),
            rng: RngStream::new(seed, StreamId::Data.for_task(task)),
            epoch: 0,
        }
    }

    fn mnist(data: Arc<MnistData>, task: usize, seed: u64, batch_size: usize, transform: Transform) -> Self {
        let mut stream = Self {
            task,
            transform,
            batch_size,
            source: Source::Mnist { data, order: Vec::new(), cursor: 0 },
            rng: RngStream::new(seed, StreamId::Data.for_task(task)),
            epoch: 0,
        };
        stream.reshuffle();
        stream.epoch = 0;
        stream
    }

    pub fn shuffled_labels(data: Arc<MnistData>, task: usize, perm_seed: u64, batch_size: usize) -> Self {
        let perm = label_permutation(perm_seed, task);
        Self::mnist(data, task, perm_seed, batch_size, Transform::LabelPermutation(perm))
    }

    pub fn permuted_pixels(data: Arc<MnistData>, task: usize, perm_seed: u64, batch_size: usize) -> Self {
        let perm = pixel_permutation(perm_seed, task, data.pixels());
        Self::mnist(data, task, perm_seed, batch_size, Transform::PixelPermutation(perm))
    }

    /// The same task drawn from an independent random stream, e.g. for
    /// reconfiguration or Fisher batches.
    pub fn reseeded(mut self, seed: u64, stream: StreamId) -> Self {
        self.rng = RngStream::new(seed, stream.for_task(self.task));
        self.reshuffle();
        self.epoch = 0;
        self
    }

    /// Completed passes over the training split (always 0 for synthetic).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn reshuffle(&mut self) {
        if let Source::Mnist { data, order, cursor } = &mut self.source {
            *order = (0..data.train_labels.len()).collect();
            order.shuffle(&mut self.rng);
            *cursor = 0;
            self.epoch += 1;
        }
    }

    pub fn next_batch(&mut self) -> Result<Batch> {
        match &mut self.source {
            Source::Synthetic(spec) => synthetic_batch(spec, self.task, self.batch_size, &mut self.rng),
            Source::Mnist { .. } => {
                let mut picked = Vec::with_capacity(self.batch_size);
                while picked.len() < self.batch_size {
                    let Source::Mnist { order, cursor, .. } = &mut self.source else { unreachable!() };
                    if *cursor == order.len() {
                        self.reshuffle();
                        continue;
                    }
                    let take = (self.batch_size - picked.len()).min(order.len() - *cursor);
                    picked.extend_from_slice(&order[*cursor..*cursor + take]);
                    *cursor += take;
                }
                let Source::Mnist { data, .. } = &self.source else { unreachable!() };
                Ok(gather_mnist(&data.train_images, &data.train_labels, &picked, &self.transform))
            }
        }
    }
}

/// Held-out data for one task: a support batch used by the recovered
/// protocol and a disjoint scoring set.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub support: Batch,
    scoring: Scoring,
}

#[derive(Debug, Clone)]
enum Scoring {
    Materialized(Batch),
    MnistTest { data: Arc<MnistData>, indices: Vec<usize>, transform: Transform },
}

impl EvalSet {
    /// Fixed synthetic sets of `n_eval` scored samples and `n_support` support samples.
    pub fn synthetic(spec: &SyntheticSpec, task: usize, seed: u64, n_eval: usize, n_support: usize) -> Result<Self> {
        let mut rng = RngStream::new(seed, StreamId::Eval.for_task(task));
        let scoring = synthetic_batch(spec, task, n_eval, &mut rng)?;
        let mut rng = RngStream::new(seed, StreamId::Support.for_task(task));
        let support = synthetic_batch(spec, task, n_support, &mut rng)?;
        Ok(Self { support, scoring: Scoring::Materialized(scoring) })
    }

    /// Test split under `transform`, minus a seeded support batch of `n_support`.
    pub fn mnist(data: Arc<MnistData>, task: usize, seed: u64, transform: Transform, n_support: usize) -> Self {
        let n = data.test_labels.len();
        let mut all: Vec<usize> = (0..n).collect();
        let mut rng = RngStream::new(seed, StreamId::Support.for_task(task));
        let n_support = n_support.min(n);
        let (chosen, _) = all.partial_shuffle(&mut rng, n_support);
        let support_idx = chosen.to_vec();
        let mut excluded = vec![false; n];
        for &i in &support_idx {
            excluded[i] = true;
        }
        let indices: Vec<usize> = (0..n).filter(|&i| !excluded[i]).collect();
        let support = gather_mnist(&data.test_images, &data.test_labels, &support_idx, &transform);
        Self { support, scoring: Scoring::MnistTest { data, indices, transform } }
    }

    pub fn len(&self) -> usize {
        match &self.scoring {
            Scoring::Materialized(b) => b.len(),
            Scoring::MnistTest { indices, .. } => indices.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chunk_count(&self, size: usize) -> usize {
        self.len().div_ceil(size)
    }

    /// Scoring rows `[i*size, (i+1)*size)`.
    pub fn chunk(&self, i: usize, size: usize) -> Batch {
        let lo = i * size;
        let hi = (lo + size).min(self.len());
        match &self.scoring {
            Scoring::Materialized(b) => b.rows(lo..hi),
            Scoring::MnistTest { data, indices, transform } => {
                gather_mnist(&data.test_images, &data.test_labels, &indices[lo..hi], transform)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::SyntheticKind;

    fn tiny_mnist(n_train: usize, n_test: usize) -> Arc<MnistData> {
        let mut rng = RngStream::new(9, 0);
        let img = |n: usize, rng: &mut RngStream| {
            let v = (0..n * 16).map(|_| (rng.below(256) as f64) / 255.0).collect();
            Array2::from_shape_vec((n, 16), v).unwrap()
        };
        let train_images = img(n_train, &mut rng);
        let test_images = img(n_test, &mut rng);
        Arc::new(MnistData {
            train_images,
            train_labels: (0..n_train).map(|i| (i % 10) as u8).collect(),
            test_images,
            test_labels: (0..n_test).map(|i| (i % 10) as u8).collect(),
        })
    }

    #[test]
    fn task_zero_is_identity() {
        assert_eq!(label_permutation(5, 0), (0..10).collect::<Vec<_>>());
        assert_eq!(pixel_permutation(5, 0, 784), (0..784).collect::<Vec<_>>());
    }

    #[test]
    fn permutations_are_bijections_and_seeded() {
        for t in 1..6 {
            let mut p = label_permutation(5, t);
            assert_eq!(p, label_permutation(5, t));
            p.sort_unstable();
            assert_eq!(p, (0..10).collect::<Vec<_>>());
        }
        assert_ne!(pixel_permutation(5, 1, 784), pixel_permutation(5, 2, 784));
    }

    #[test]
    fn pixel_inverse_roundtrip() {
        let img: Vec<f64> = (0..784).map(|i| (i * 37 % 255) as f64 / 255.0).collect();
        let p = pixel_permutation(1, 3, 784);
        let back = permute_pixels(&permute_pixels(&img, &p), &invert_permutation(&p));
        assert_eq!(back, img);
    }

    #[test]
    fn mnist_streams_reproducible_and_epoch_aware() {
        let data = tiny_mnist(50, 20);
        let mut a = TaskStream::permuted_pixels(data.clone(), 1, 3, 16);
        let mut b = TaskStream::permuted_pixels(data.clone(), 1, 3, 16);
        let mut seen = Vec::new();
        for _ in 0..7 {
            let (ba, bb) = (a.next_batch().unwrap(), b.next_batch().unwrap());
            assert_eq!(ba, bb);
            seen.push(ba);
        }
        assert_eq!(a.epoch(), 2);
        let c = TaskStream::permuted_pixels(data, 2, 3, 16).next_batch().unwrap();
        assert_ne!(c, seen[0]);
    }

    #[test]
    fn label_stream_relabels_only() {
        let data = tiny_mnist(30, 10);
        let mut s = TaskStream::shuffled_labels(data.clone(), 2, 4, 30);
        let batch = s.next_batch().unwrap();
        let Transform::LabelPermutation(perm) = s.transform.clone() else { panic!() };
        let Targets::Classes(y) = &batch.y else { panic!() };
        for (r, row) in batch.x.rows().into_iter().enumerate() {
            let i = (0..30).find(|&i| data.train_images.row(i) == row).unwrap();
            assert_eq!(y[r], perm[data.train_labels[i] as usize]);
        }
    }

    #[test]
    fn mnist_eval_excludes_support() {
        let data = tiny_mnist(10, 100);
        let e = EvalSet::mnist(data, 1, 0, Transform::LabelPermutation(label_permutation(0, 1)), 30);
        assert_eq!(e.len(), 70);
        assert_eq!(e.support.len(), 30);
        let scored: Vec<Batch> = (0..e.chunk_count(32)).map(|i| e.chunk(i, 32)).collect();
        assert_eq!(scored.iter().map(Batch::len).sum::<usize>(), 70);
        for s in e.support.x.rows() {
            for b in &scored {
                assert!(b.x.rows().into_iter().all(|r| r != s));
            }
        }
    }

    #[test]
    fn synthetic_eval_is_fixed() {
        let spec = SyntheticSpec::new(0, SyntheticKind::Classification);
        let a = EvalSet::synthetic(&spec, 1, 0, 100, 10).unwrap();
        let b = EvalSet::synthetic(&spec, 1, 0, 100, 10).unwrap();
        assert_eq!(a.chunk(0, 100), b.chunk(0, 100));
        assert_eq!(a.chunk(1, 64).len(), 36);
    }
}

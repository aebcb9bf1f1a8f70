//! Task streams: the synthetic benchmark and MNIST variants.

mod fetch;
mod idx;
mod stream;
mod synthetic;

use ndarray::{s, Array2};

use crate::numcore::Targets;

pub use fetch::{content_digest, fetch_files, fetch_mnist, sha256_hex, DEFAULT_URL_BASE, MNIST_DIGESTS};
pub use idx::{
    load_mnist_idx, locate, parse_images, parse_labels, read_maybe_gz, MnistData, FILE_NAMES, IMAGES_MAGIC,
    LABELS_MAGIC, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS,
};
pub use stream::{
    gather_mnist, invert_permutation, label_permutation, permute_pixels, pixel_permutation, EvalSet, TaskStream,
    Transform, MNIST_CLASSES,
};
pub use synthetic::{synthetic_batch, SyntheticKind, SyntheticSpec, BLOCK_DIM, LATENT_DIM, N_TASKS};

/// Inputs `[n, d_in]` with matching targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub y: Targets,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn rows(&self, range: std::ops::Range<usize>) -> Batch {
        let idx: Vec<usize> = range.clone().collect();
        let width = match &self.y {
            Targets::Values(v) if !self.is_empty() => v.len() / self.len(),
            _ => 1,
        };
        Batch { x: self.x.slice(s![range, ..]).to_owned(), y: self.y.gather(&idx, width) }
    }
}

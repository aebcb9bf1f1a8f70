//! Big-endian IDX containers as used by MNIST, optionally gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::Array2;

use crate::error::{FtnError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";
pub const FILE_NAMES: [&str; 4] = [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS];

/// MNIST with pixels scaled to `[0, 1]`, images flattened row-major to 784.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistData {
    pub train_images: Array2<f64>,
    pub train_labels: Vec<u8>,
    pub test_images: Array2<f64>,
    pub test_labels: Vec<u8>,
}

impl MnistData {
    pub fn pixels(&self) -> usize {
        self.train_images.ncols()
    }
}

fn ingestion(path: &Path, offset: u64, message: impl Into<String>) -> FtnError {
    FtnError::Ingestion { path: path.to_path_buf(), offset, message: message.into() }
}

/// File contents, gunzipped when the data starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| ingestion(path, 0, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| ingestion(path, offset as u64, "truncated header"))
}

/// `(count, rows, cols, pixels)` from an IDX3 image file.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(ingestion(path, 0, format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let body = &bytes[16..];
    let expected = n * rows * cols;
    if body.len() < expected {
        return Err(ingestion(
            path,
            (16 + body.len()) as u64,
            format!("truncated: {} of {expected} pixel bytes", body.len()),
        ));
    }
    if body.len() > expected {
        return Err(ingestion(path, (16 + expected) as u64, "trailing bytes after pixel data"));
    }
    Ok((n, rows, cols, body.to_vec()))
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(ingestion(path, 0, format!("label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(ingestion(path, (8 + body.len()) as u64, format!("truncated: {} of {n} labels", body.len())));
    }
    if body.len() > n {
        return Err(ingestion(path, (8 + n) as u64, "trailing bytes after labels"));
    }
    Ok(body.to_vec())
}

/// Resolve `name` or `name.gz` inside `dir`.
pub fn locate(dir: &Path, name: &str) -> Option<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Some(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    gz.is_file().then_some(gz)
}

fn load_split(dir: &Path, images: &str, labels: &str) -> Result<(Array2<f64>, Vec<u8>)> {
    let ipath = locate(dir, images).ok_or_else(|| ingestion(&dir.join(images), 0, "file not found"))?;
    let lpath = locate(dir, labels).ok_or_else(|| ingestion(&dir.join(labels), 0, "file not found"))?;
    let (n, rows, cols, pixels) = parse_images(&read_maybe_gz(&ipath)?, &ipath)?;
    let labs = parse_labels(&read_maybe_gz(&lpath)?, &lpath)?;
    if labs.len() != n {
        return Err(ingestion(&lpath, 4, format!("{} labels for {n} images in {}", labs.len(), ipath.display())));
    }
    if let Some(bad) = labs.iter().position(|&l| l > 9) {
        return Err(ingestion(&lpath, 8 + bad as u64, format!("label {} is not a digit", labs[bad])));
    }
    let scaled = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let images = Array2::from_shape_vec((n, rows * cols), scaled).expect("sizes checked");
    Ok((images, labs))
}

/// Load the four MNIST files from `dir` (raw or `.gz`).
pub fn load_mnist_idx(dir: &Path) -> Result<MnistData> {
    let (train_images, train_labels) = load_split(dir, TRAIN_IMAGES, TRAIN_LABELS)?;
    let (test_images, test_labels) = load_split(dir, TEST_IMAGES, TEST_LABELS)?;
    if train_images.ncols() != test_images.ncols() {
        return Err(ingestion(dir, 0, "train and test image sizes differ"));
    }
    Ok(MnistData { train_images, train_labels, test_images, test_labels })
}

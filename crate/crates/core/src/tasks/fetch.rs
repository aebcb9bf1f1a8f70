//! HTTP download of the four MNIST archives with digest verification.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::idx::{locate, read_maybe_gz, FILE_NAMES};
use crate::error::{FtnError, Result};

pub const DEFAULT_URL_BASE: &str = "https://storage.googleapis.com/cvdf-datasets/mnist";

/// SHA-256 of the decompressed canonical files, in `FILE_NAMES` order.
pub const MNIST_DIGESTS: [&str; 4] = [
    "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the payload after gunzip, so `.gz` and raw copies compare equal.
pub fn content_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_maybe_gz(path)?))
}

/// Fetch the canonical MNIST files into `dest`.
pub fn fetch_mnist(url_base: &str, dest: &Path) -> Result<Vec<PathBuf>> {
    let expected: Vec<(&str, &str)> = FILE_NAMES.iter().copied().zip(MNIST_DIGESTS).collect();
    fetch_files(url_base, dest, &expected)
}

/// Download `{url_base}/{name}.gz` for every entry not already present with
/// the right digest. A download whose digest is wrong is renamed to
/// `{name}.gz.quarantine` and reported as an integrity error.
pub fn fetch_files(url_base: &str, dest: &Path, expected: &[(&str, &str)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dest)?;
    let mut paths = Vec::with_capacity(expected.len());
    for &(name, digest) in expected {
        if let Some(existing) = locate(dest, name) {
            if content_digest(&existing)? == digest {
                log::debug!("{} present, digest ok", existing.display());
                paths.push(existing);
                continue;
            }
            log::warn!("{} has a stale digest, downloading again", existing.display());
        }
        let url = format!("{}/{name}.gz", url_base.trim_end_matches('/'));
        log::info!("downloading {url}");
        let body = download(&url)?;
        let target = dest.join(format!("{name}.gz"));
        let partial = dest.join(format!("{name}.gz.part"));
        fs::write(&partial, &body)?;
        let actual = content_digest(&partial)?;
        if actual != digest {
            let quarantine = dest.join(format!("{name}.gz.quarantine"));
            fs::rename(&partial, &quarantine)?;
            return Err(FtnError::Integrity { path: quarantine, expected: digest.to_string(), actual });
        }
        fs::rename(&partial, &target)?;
        paths.push(target);
    }
    Ok(paths)
}

fn download(url: &str) -> Result<Vec<u8>> {
    let fetch_err = |message: String| FtnError::Fetch { url: url.to_string(), message };
    let mut response = ureq::get(url).call().map_err(|e| fetch_err(e.to_string()))?;
    let mut body = Vec::new();
    response
        .body_mut()
        .with_config()
        .limit(256 * 1024 * 1024)
        .reader()
        .read_to_end(&mut body)
        .map_err(|e| fetch_err(e.to_string()))?;
    Ok(body)
}

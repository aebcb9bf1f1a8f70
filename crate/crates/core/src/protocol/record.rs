//! On-disk layout of finished runs.

use std::fs;
use std::path::{Path, PathBuf};

use super::runner::{RunOutcome, RunRecord, Timing};
use crate::backbone::NeuronBank;
use crate::baselines::EwcAnchor;
use crate::config::ExperimentConfig;
use crate::error::{FtnError, Result};

pub const RECORD_FILE: &str = "record.json";
pub const TIMING_FILE: &str = "timing.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// `out_dir/<experiment>/<variant>/seed-<seed>`.
pub fn cell_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join(cfg.experiment.name()).join(cfg.variant.name()).join(format!("seed-{seed}"))
}

/// Record, matrices as CSV, model checkpoint, EWC anchors and timings.
pub fn write_outcome(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let r = &outcome.record;
    fs::write(dir.join(RECORD_FILE), serde_json::to_string_pretty(r)?)?;
    fs::write(dir.join("stored.csv"), r.stored.to_csv())?;
    fs::write(dir.join("recovered.csv"), r.recovered.to_csv())?;
    fs::write(dir.join(TIMING_FILE), serde_json::to_string_pretty(&outcome.timing)?)?;
    outcome.model.write_checkpoint(fs::File::create(dir.join(CHECKPOINT_FILE))?)?;
    for a in &outcome.anchors {
        a.write_to(fs::File::create(dir.join(format!("anchor-{}.ewc", a.task)))?)?;
    }
    Ok(())
}

pub fn read_record(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| FtnError::Serde(format!("{}: {e}", path.display())))
}

pub fn read_timing(dir: &Path) -> Result<Timing> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(TIMING_FILE))?)?)
}

pub fn read_model(dir: &Path) -> Result<NeuronBank> {
    NeuronBank::read_checkpoint(std::io::BufReader::new(fs::File::open(dir.join(CHECKPOINT_FILE))?))
}

pub fn read_anchor(dir: &Path, model: &NeuronBank, task: usize) -> Result<EwcAnchor> {
    let f = fs::File::open(dir.join(format!("anchor-{task}.ewc")))?;
    EwcAnchor::read_from(model.shape(), std::io::BufReader::new(f))
}

/// Every `record.json` below `root`, sorted by path.
pub fn find_records(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut pending = vec![root.to_path_buf()];
    while let Some(dir) = pending.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                pending.push(path);
            } else if path.file_name().is_some_and(|n| n == RECORD_FILE) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

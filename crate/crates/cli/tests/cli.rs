use std::path::Path;
use std::process::Command;

use ftn::backbone::{Mask, Provenance};
use ftn::config::{Experiment, ExperimentConfig, Preset};
use ftn::configurer::{static_mask, Variant};
use ftn::protocol::{compute_metrics, EvalProtocol, PerfMatrix, RunRecord, ScoreKind};
use ftn_cli::masks::{mask_pgm, overlay_pixels, overlay_ppm, parse_pgm, PALETTE};
use ftn_cli::report::build_report;

fn ftn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ftn"))
}

fn tiny_args(out: &Path) -> Vec<String> {
    [
        "run",
        "--experiment",
        "synthetic-clf",
        "--preset",
        "desk",
        "--seeds",
        "5",
        "--jobs",
        "1",
        "--set",
        "schedule.steps_per_epoch=6",
        "--set",
        "schedule.eval_batch=64",
        "--set",
        "model.side=4",
        "--set",
        "model.k=4",
        "--set",
        "model.layers=2",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn record(variant: Variant, seed: u64, rows: Vec<Vec<f64>>) -> RunRecord {
    let mut config = ExperimentConfig::preset(Experiment::SyntheticClf, variant, Preset::Desk);
    config.seeds = vec![seed];
    let stored = PerfMatrix::from_rows(ScoreKind::Accuracy, EvalProtocol::Stored, rows.clone()).unwrap();
    let mut recovered = stored.clone();
    recovered.protocol = EvalProtocol::Recovered;
    if variant == Variant::FtnSlow {
        let last = recovered.rows.len() - 1;
        recovered.rows[last][0] -= 0.1;
    }
    let masks = (0..rows.len()).map(|t| static_mask(Variant::FixedMask, 16, 32, t).unwrap()).collect();
    RunRecord {
        metrics_stored: compute_metrics(&stored).unwrap(),
        metrics_recovered: compute_metrics(&recovered).unwrap(),
        config,
        seed,
        stored_masks: masks,
        stored,
        recovered,
        block_loss: vec![0.5; rows.len()],
    }
}

#[test]
fn dry_run_prints_config_without_training() {
    let out = ftn().args(["run", "--experiment", "mnist-shuffled", "--preset", "desk", "--dry-run"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!((cfg.model.side, cfg.model.k, cfg.schedule.tasks), (16, 32, 3));
}

#[test]
fn usage_and_data_errors_map_to_exit_codes() {
    let out = ftn().args(["run", "--experiment", "synthetic-clf", "--set", "model.width=2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = ftn().args(["run", "--experiment", "permuted-mnist", "--data-dir"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = ftn().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_is_bit_identical_and_fixed_mask_does_not_forget() {
    let a = tempfile::tempdir().unwrap();
    let run = || {
        let status = ftn().args(tiny_args(a.path())).args(["--variant", "fixed-mask,ftn-slow"]).status().unwrap();
        assert!(status.success());
    };
    let record_path = |variant: &str| a.path().join("synthetic-clf").join(variant).join("seed-5/record.json");
    run();
    let first: Vec<String> =
        ["fixed-mask", "ftn-slow"].iter().map(|v| std::fs::read_to_string(record_path(v)).unwrap()).collect();
    run();
    for (v, before) in ["fixed-mask", "ftn-slow"].iter().zip(&first) {
        assert!(*before == std::fs::read_to_string(record_path(v)).unwrap(), "{v} record changed on rerun");
    }
    let fixed: RunRecord =
        serde_json::from_slice(&std::fs::read(a.path().join("synthetic-clf/fixed-mask/seed-5/record.json")).unwrap())
            .unwrap();
    assert_eq!((fixed.metrics_stored.fm, fixed.metrics_stored.bwt), (0.0, 0.0));

    let out = ftn().arg("report").arg(a.path()).output().unwrap();
    assert!(out.status.success());
    assert!(a.path().join("report.csv").is_file());
    assert!(a.path().join("decomposition.csv").is_file());

    let out = ftn().arg("export-masks").arg(a.path()).args(["--experiment", "synthetic-clf"]).output().unwrap();
    assert!(out.status.success());
    let pgm = std::fs::read(a.path().join("masks/fixed-mask/seed-5/task-1.pgm")).unwrap();
    let (side, gates) = parse_pgm(&pgm).unwrap();
    assert_eq!((side, gates), (4, fixed.stored_masks[1].gates.clone()));
}

#[test]
fn report_matches_fixture_values() {
    let records = vec![
        record(Variant::FixedMask, 0, vec![vec![0.9], vec![0.9, 0.8], vec![0.9, 0.8, 0.7]]),
        record(Variant::FixedMask, 1, vec![vec![0.7], vec![0.7, 0.6], vec![0.7, 0.6, 0.5]]),
        record(Variant::FtnSlow, 0, vec![vec![1.0], vec![0.5, 1.0], vec![0.2, 0.4, 1.0]]),
        record(Variant::FtnSlow, 1, vec![vec![1.0], vec![0.5, 1.0], vec![0.2, 0.4, 1.0]]),
        record(
            Variant::NoMask,
            0,
            vec![vec![0.6]; 1].into_iter().chain([vec![0.6, 0.6], vec![0.6, 0.6, 0.6]]).collect(),
        ),
    ];
    let report = build_report(records).unwrap();
    let row =
        |v: Variant, p: EvalProtocol| report.rows.iter().find(|r| r.variant == v && r.protocol == p).unwrap().clone();
    let fixed = row(Variant::FixedMask, EvalProtocol::Stored);
    assert!((fixed.acc.mean - 0.7).abs() < 1e-12 && (fixed.acc.std - 0.1).abs() < 1e-12);
    assert_eq!((fixed.fm.mean, fixed.bwt.mean), (0.0, 0.0));
    let slow = row(Variant::FtnSlow, EvalProtocol::Stored);
    assert!((slow.fm.mean - 0.7).abs() < 1e-12 && slow.fm.std == 0.0);
    let slow_rec = row(Variant::FtnSlow, EvalProtocol::Recovered);
    assert!((slow_rec.acc.mean - 1.5 / 3.0).abs() < 1e-12);
    let single = row(Variant::NoMask, EvalProtocol::Recovered);
    assert_eq!((single.seeds, single.acc.std), (1, 0.0));

    // Reference: fixed-mask prior-task means 0.85 (seed 0) and 0.65 (seed 1).
    let d = report.decomposition.iter().find(|d| d.variant == Variant::FtnSlow).unwrap();
    assert!((d.overlap.mean - ((0.85 - 0.3) + (0.65 - 0.3)) / 2.0).abs() < 1e-12);
    assert!((d.recall.mean - 0.05).abs() < 1e-12);
    let nm = report.decomposition.iter().find(|d| d.variant == Variant::NoMask).unwrap();
    assert_eq!(nm.recall.mean, 0.0);
    assert!((nm.overlap.mean - 0.25).abs() < 1e-12);
    let text = report.to_text();
    assert!(text.contains("ftn-slow") && text.contains("overlap"));
}

#[test]
fn incompatible_records_rejected() {
    let mut other = record(Variant::NoMask, 0, vec![vec![0.5]]);
    other.config.model.k = 8;
    let records = vec![record(Variant::FixedMask, 0, vec![vec![0.5]]), other];
    assert!(build_report(records).is_err());
}

#[test]
fn pgm_roundtrip_and_lit_count() {
    let mut gates = vec![false; 1024];
    for i in (0..1024).step_by(8) {
        gates[i] = true;
    }
    let mask = Mask::from_gates(32, gates.clone(), Provenance::Configured).unwrap();
    let pgm = mask_pgm(&mask).unwrap();
    assert!(pgm.starts_with(b"P5"));
    let (side, parsed) = parse_pgm(&pgm).unwrap();
    assert_eq!(side, 32);
    assert_eq!(parsed, gates);
    assert_eq!(parsed.iter().filter(|&&g| g).count(), 128);
}

#[test]
fn fixed_mask_overlay_is_three_bands() {
    let masks: Vec<Mask> = (0..3).map(|t| static_mask(Variant::FixedMask, 32, 128, t).unwrap()).collect();
    let rgb = overlay_pixels(&masks);
    for i in 0..1024 {
        let px = &rgb[3 * i..3 * i + 3];
        let expected = if i < 384 { PALETTE[i / 128] } else { [0, 0, 0] };
        assert_eq!(px, expected);
    }
    let ppm = overlay_ppm(&masks).unwrap();
    assert!(ppm.starts_with(b"P6"));
    assert!(ppm.ends_with(&rgb));
}

#[test]
fn overlapping_cells_saturate() {
    let a = static_mask(Variant::NoMask, 4, 2, 0).unwrap();
    let masks = vec![a.clone(), a.clone(), a.clone(), a.clone(), a.clone(), a.clone(), a];
    let rgb = overlay_pixels(&masks);
    assert_eq!(&rgb[0..3], &[255, 255, 255]);
    assert_eq!(&rgb[6..9], &[0, 0, 0]);
}

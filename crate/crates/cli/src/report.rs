//! `ftn report`: mean ± std tables over seeds, computed from run records only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use ftn::config::Experiment;
use ftn::configurer::Variant;
use ftn::protocol::{
    decompose_overlap_recall, find_records, prior_task_mean, read_record, EvalProtocol, Metrics, MetricsReport,
    RunRecord, ScoreKind, Summary,
};
use ftn::FtnError;
use serde::Serialize;

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Directory searched recursively for record.json files.
    pub run_dir: PathBuf,
    /// Where to write report.csv and decomposition.csv (default: run_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub experiment: Experiment,
    pub variant: Variant,
    pub protocol: EvalProtocol,
    pub kind: ScoreKind,
    pub seeds: usize,
    pub acc: Summary,
    pub fm: Summary,
    pub bwt: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub experiment: Experiment,
    pub variant: Variant,
    pub oracle_ref: f64,
    pub overlap: Summary,
    pub recall: Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<TableRow>,
    pub decomposition: Vec<DecompositionRow>,
}

type Groups = BTreeMap<Experiment, BTreeMap<Variant, Vec<RunRecord>>>;

fn group(records: Vec<RunRecord>) -> ftn::Result<Groups> {
    let mut groups: Groups = BTreeMap::new();
    for r in records {
        let by_variant = groups.entry(r.config.experiment).or_default();
        if let Some(first) = by_variant.values().flatten().next() {
            if !first.config.compatible(&r.config) {
                return Err(FtnError::Data(format!(
                    "{} records with incompatible configurations ({} seed {} vs {} seed {})",
                    r.config.experiment, first.config.variant, first.seed, r.config.variant, r.seed
                )));
            }
        }
        let cell = by_variant.entry(r.config.variant).or_default();
        if cell.iter().any(|o| o.seed == r.seed) {
            return Err(FtnError::Data(format!(
                "duplicate record for {} {} seed {}",
                r.config.experiment, r.config.variant, r.seed
            )));
        }
        cell.push(r);
    }
    for cells in groups.values_mut() {
        for records in cells.values_mut() {
            records.sort_by_key(|r| r.seed);
        }
    }
    Ok(groups)
}

/// Tables for both protocols, plus the overlap/recall split wherever a
/// fixed-mask reference run exists for the same experiment.
pub fn build_report(records: Vec<RunRecord>) -> ftn::Result<Report> {
    let groups = group(records)?;
    let mut report = Report::default();
    for (&experiment, cells) in &groups {
        for protocol in [EvalProtocol::Recovered, EvalProtocol::Stored] {
            for (&variant, records) in cells {
                let metrics: Vec<Metrics> = records
                    .iter()
                    .map(|r| match protocol {
                        EvalProtocol::Stored => r.metrics_stored,
                        EvalProtocol::Recovered => r.metrics_recovered,
                    })
                    .collect();
                let m = MetricsReport::from_seeds(metrics)?;
                report.rows.push(TableRow {
                    experiment,
                    variant,
                    protocol,
                    kind: records[0].stored.kind,
                    seeds: records.len(),
                    acc: m.acc,
                    fm: m.fm,
                    bwt: m.bwt,
                });
            }
        }
        let Some(oracle) = cells.get(&Variant::FixedMask) else { continue };
        if oracle[0].stored.tasks() < 2 {
            continue;
        }
        let refs: BTreeMap<u64, f64> = oracle.iter().map(|r| (r.seed, prior_task_mean(&r.stored))).collect();
        let fallback = refs.values().sum::<f64>() / refs.len() as f64;
        for (&variant, records) in cells {
            let mut overlap = Vec::new();
            let mut recall = Vec::new();
            for r in records {
                let oracle_ref = refs.get(&r.seed).copied().unwrap_or(fallback);
                let d = decompose_overlap_recall(&r.stored, &r.recovered, oracle_ref)?;
                overlap.push(d.overlap);
                recall.push(d.recall);
            }
            report.decomposition.push(DecompositionRow {
                experiment,
                variant,
                oracle_ref: fallback,
                overlap: Summary::of(&overlap),
                recall: Summary::of(&recall),
            });
        }
    }
    Ok(report)
}

fn pm(s: &Summary) -> String {
    format!("{:.3} ± {:.3}", s.mean, s.std)
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut last: Option<(Experiment, EvalProtocol)> = None;
        for r in &self.rows {
            if last != Some((r.experiment, r.protocol)) {
                let score = match r.kind {
                    ScoreKind::Accuracy => "ACC",
                    ScoreKind::Mse => "MSE",
                };
                let protocol = match r.protocol {
                    EvalProtocol::Stored => "stored",
                    EvalProtocol::Recovered => "recovered",
                };
                let _ = writeln!(out, "\n{} ({protocol} masks)", r.experiment);
                let _ = writeln!(out, "{:<12} {:>5}  {:<16} {:<16} {:<16}", "variant", "seeds", score, "FM", "BWT");
                last = Some((r.experiment, r.protocol));
            }
            let _ = writeln!(
                out,
                "{:<12} {:>5}  {:<16} {:<16} {:<16}",
                r.variant.name(),
                r.seeds,
                pm(&r.acc),
                pm(&r.fm),
                pm(&r.bwt)
            );
        }
        let mut last = None;
        for d in &self.decomposition {
            if last != Some(d.experiment) {
                let _ = writeln!(out, "\n{} overlap / recall (fixed-mask reference {:.3})", d.experiment, d.oracle_ref);
                let _ = writeln!(out, "{:<12} {:<16} {:<16}", "variant", "overlap", "recall");
                last = Some(d.experiment);
            }
            let _ = writeln!(out, "{:<12} {:<16} {:<16}", d.variant.name(), pm(&d.overlap), pm(&d.recall));
        }
        out
    }

    pub fn table_csv(&self) -> String {
        let mut out =
            String::from("experiment,protocol,variant,seeds,score_mean,score_std,fm_mean,fm_std,bwt_mean,bwt_std\n");
        for r in &self.rows {
            let protocol = match r.protocol {
                EvalProtocol::Stored => "stored",
                EvalProtocol::Recovered => "recovered",
            };
            let _ = writeln!(
                out,
                "{},{protocol},{},{},{},{},{},{},{},{}",
                r.experiment, r.variant, r.seeds, r.acc.mean, r.acc.std, r.fm.mean, r.fm.std, r.bwt.mean, r.bwt.std
            );
        }
        out
    }

    pub fn decomposition_csv(&self) -> String {
        let mut out = String::from("experiment,variant,oracle_ref,overlap_mean,overlap_std,recall_mean,recall_std\n");
        for d in &self.decomposition {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                d.experiment, d.variant, d.oracle_ref, d.overlap.mean, d.overlap.std, d.recall.mean, d.recall.std
            );
        }
        out
    }
}

pub fn load_records(run_dir: &Path) -> ftn::Result<Vec<RunRecord>> {
    let paths = find_records(run_dir)?;
    if paths.is_empty() {
        return Err(FtnError::Data(format!("no run records under {}", run_dir.display())));
    }
    paths.iter().map(|p| read_record(p)).collect()
}

pub fn cmd_report(args: &ReportArgs) -> anyhow::Result<Report> {
    let report = build_report(load_records(&args.run_dir)?)?;
    print!("{}", report.to_text());
    let out = args.out.clone().unwrap_or_else(|| args.run_dir.clone());
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("report.csv"), report.table_csv())?;
    if !report.decomposition.is_empty() {
        std::fs::write(out.join("decomposition.csv"), report.decomposition_csv())?;
    }
    Ok(report)
}

//! `ftn run`: train every (variant, seed) cell and write run records.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use ftn::config::{Experiment, ExperimentConfig, Preset};
use ftn::configurer::Variant;
use ftn::protocol::{cell_dir, load_data, run_cell, write_outcome, RunRecord};
use ftn::tasks::MnistData;

use crate::overrides;

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML config file. Without it, --experiment selects a preset.
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub experiment: Option<Experiment>,
    #[arg(long, default_value = "full")]
    pub preset: Preset,
    /// Comma-separated variants; defaults to the config's variant.
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<Variant>,
    /// Comma-separated seeds; defaults to the config's seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Maximum number of cells trained at once.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
}

/// One resolved config per requested variant.
pub fn resolve(args: &RunArgs) -> anyhow::Result<Vec<ExperimentConfig>> {
    let base = match (&args.config, args.experiment) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(e)) => {
            let v = args.variant.first().copied().unwrap_or(Variant::FtnSlow);
            ExperimentConfig::preset(e, v, args.preset)
        }
        (None, None) => bail!(ftn::FtnError::Usage("give a config file or --experiment".into())),
    };
    let mut base = overrides::apply(&base, &args.set)?;
    if !args.seeds.is_empty() {
        base.seeds = args.seeds.clone();
    }
    if let Some(out) = &args.out {
        base.out_dir = out.clone();
    }
    if let Some(d) = &args.data_dir {
        base.data_dir = Some(d.clone());
    }
    let variants = if args.variant.is_empty() { vec![base.variant] } else { args.variant.clone() };
    variants
        .into_iter()
        .map(|v| {
            let mut c = base.clone();
            c.variant = v;
            c.validate()?;
            Ok(c)
        })
        .collect()
}

fn run_one(cfg: &ExperimentConfig, seed: u64, data: Option<Arc<MnistData>>) -> anyhow::Result<RunRecord> {
    let outcome = run_cell(cfg, seed, data)?;
    let dir = cell_dir(cfg, seed);
    write_outcome(&dir, &outcome)?;
    let m = &outcome.record.metrics_recovered;
    println!(
        "{} {} seed {seed}: acc {:.4} fm {:.4} bwt {:.4} ({:.1}s) -> {}",
        cfg.experiment,
        cfg.variant,
        m.acc,
        m.fm,
        m.bwt,
        outcome.timing.total_seconds,
        dir.display()
    );
    Ok(outcome.record)
}

#[cfg(feature = "parallel")]
fn run_cells(
    cells: &[(ExperimentConfig, u64)],
    data: Option<Arc<MnistData>>,
    jobs: usize,
) -> Vec<anyhow::Result<RunRecord>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    pool.install(|| cells.par_iter().map(|(c, s)| run_one(c, *s, data.clone())).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_cells(
    cells: &[(ExperimentConfig, u64)],
    data: Option<Arc<MnistData>>,
    _jobs: usize,
) -> Vec<anyhow::Result<RunRecord>> {
    cells.iter().map(|(c, s)| run_one(c, *s, data.clone())).collect()
}

pub fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let configs = resolve(args)?;
    if args.dry_run {
        for c in &configs {
            println!("{}", c.to_toml());
        }
        return Ok(());
    }
    let data = load_data(&configs[0]).context("loading data")?;
    let cells: Vec<(ExperimentConfig, u64)> =
        configs.iter().flat_map(|c| c.seeds.iter().map(move |&s| (c.clone(), s))).collect();
    let jobs = args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1);
    let results = run_cells(&cells, data, jobs);
    let mut first_err = None;
    for ((cfg, seed), res) in cells.iter().zip(results) {
        if let Err(e) = res {
            eprintln!("cell {} {} seed {seed} failed: {e:#}", cfg.experiment, cfg.variant);
            first_err.get_or_insert(e.context(format!("cell {} {} seed {seed}", cfg.experiment, cfg.variant)));
        }
    }
    match first_err {
        Some(e) => Err(e),
        None if cells.is_empty() => Err(anyhow!(ftn::FtnError::Usage("no cells to run".into()))),
        None => Ok(()),
    }
}

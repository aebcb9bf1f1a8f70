//! Command-line front end: run experiments, fetch data, aggregate reports
//! and export mask images.

pub mod masks;
pub mod overrides;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ftn::FtnError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ftn", version, about = "Functional task network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate every (variant, seed) cell of an experiment.
    Run(run::RunArgs),
    /// Aggregate run records into mean ± std tables.
    Report(report::ReportArgs),
    /// Write stored masks as PGM images and per-seed PPM overlays.
    ExportMasks(masks::ExportArgs),
    /// Download the MNIST archives and verify their digests.
    FetchData {
        #[arg(long, default_value = ftn::tasks::DEFAULT_URL_BASE)]
        url: String,
        /// Defaults to $FTN_DATA_DIR, then data/mnist.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

/// Map an error to the documented process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<FtnError>() {
        Some(FtnError::Numerical(_)) => EXIT_NUMERICAL,
        Some(
            FtnError::Data(_)
            | FtnError::Ingestion { .. }
            | FtnError::Fetch { .. }
            | FtnError::Integrity { .. }
            | FtnError::Io(_)
            | FtnError::Serde(_),
        ) => EXIT_DATA,
        Some(_) => EXIT_USAGE,
        None => EXIT_USAGE,
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Report(args) => report::cmd_report(&args).map(|_| ()),
        Command::ExportMasks(args) => masks::cmd_export_masks(&args).map(|_| ()),
        Command::FetchData { url, dest } => {
            let dest = dest
                .or_else(|| std::env::var_os(ftn::config::DATA_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("data/mnist"));
            for p in ftn::tasks::fetch_mnist(&url, &dest)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

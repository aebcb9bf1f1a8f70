//! Training protocol, evaluation, metrics and run records.

pub mod metrics;
pub mod record;
pub mod runner;

pub use metrics::{
    compute_metrics, decompose_overlap_recall, mask_overlap, prior_task_mean, Decomposition, EvalProtocol, Metrics,
    MetricsReport, PerfMatrix, ScoreKind, Summary,
};
pub use record::{cell_dir, find_records, read_anchor, read_model, read_record, read_timing, write_outcome};
pub use runner::{
    eval_recovered, eval_stored, load_data, run_block_sequential, run_cell, score_kind, score_set, RunOutcome,
    RunRecord, TaskSuite, Timing,
};

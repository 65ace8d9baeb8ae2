//! Correlation and submodularity metrics, experiment drivers and report output.

mod drivers;
mod report;
pub mod stats;
mod submod;

pub use drivers::{
    compare_estimators, run_ie_eval, run_scalability, IeEvaluation, IeSample, ScaleRow, SCALE_LOG2_CAP, SCALE_REPEATS,
};
pub use report::{ReportHeader, TsvReport};
pub use stats::{average_ranks, correlation, pearson, spearman, CorrelationReport};
pub use submod::{size_bounds, submodularity_probe, summarize, PairOutcome, SubmodularityReport, HOLDS_TOLERANCE};

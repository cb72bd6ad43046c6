//! Cold-start and execution latency benchmarks for Limes functions.
//!
//! A [`BenchmarkPlan`] names a workload, a mode and an iteration count; the
//! [`Harness`] turns it into [`LatencySamples`], and [`report::emit_reports`]
//! writes per-run CSVs, a summary table and SVG plots.

pub mod harness;
pub mod plan;
pub mod report;
pub mod stats;

pub use harness::{BenchError, Harness, LatencySamples};
pub use plan::{BenchmarkPlan, Mode};
pub use report::{emit_reports, ReportError};
pub use stats::{compute_ecdf, median, summarize, EcdfTable, StatsError, SummaryStats};

//! Benchmark orchestration: runs the generate, match and evaluate pipeline
//! over a grid of problems, description variants and runs, aggregates the
//! scores and renders plot-ready tables.

pub mod cell;
pub mod config;
pub mod fixtures;
pub mod pipeline;
pub mod report;
pub mod stats;

pub use cell::{run_cell, CellEnv, CellResult, CellTimings, FailureTag, PrepareError, ProblemContext};
pub use config::{parse_list, ConfigError, Endpoints, Metric, RunConfig, Variant};
pub use pipeline::{model_slug, run_pipeline, PipelineEnv, PipelineError, PipelineOutcome};
pub use report::{render, render_figure, FigureKind, Report, ReportError, TimingRow};
pub use stats::{
    aggregate, correlate_metrics, mean_half_width, pearson, AggregateResult, AggregateRow, ScoreKind, StatsError,
};

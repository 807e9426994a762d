use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use aspbench_core::dataset::{list_problems, load_bundle, DatasetError};
use aspbench_core::solver::Solver;
use aspbench_llm::{EndpointKind, Gateway, LlmEndpoint, PromptCache};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use tracing::info;

use crate::cell::{run_cell, CellEnv, CellResult, PrepareError, ProblemContext};
use crate::config::{ConfigError, Metric, RunConfig, Variant};
use crate::report::{cells_csv, render, timing_rows, timings_csv, FigureKind, Report, ReportError};
use crate::stats::{aggregate, correlate_metrics, AggregateResult, AggregateRow, StatsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Where the pipeline reads from and writes to.
#[derive(Debug, Clone)]
pub struct PipelineEnv {
    pub dataset: PathBuf,
    pub solver: Solver,
    pub out: PathBuf,
    /// Prompt cache for live endpoints.
    pub cache_dir: Option<PathBuf>,
    /// Set to stop scheduling cells; finished cells are still reported.
    pub cancel: Arc<AtomicBool>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// In (problem, variant, run) order.
    pub cells: Vec<CellResult>,
    pub aggregates: AggregateResult,
    pub correlation: Result<f64, StatsError>,
    /// Cells never started because of cancellation.
    pub cancelled: usize,
    pub files: Vec<PathBuf>,
}

impl PipelineOutcome {
    /// Cells that produced scores.
    pub fn completed(&self) -> usize {
        self.cells.iter().filter(|c| !c.dropped()).count()
    }
}

/// Machine-readable summary written next to the CSV reports.
#[derive(Debug, Serialize)]
struct Summary<'a> {
    model: &'a str,
    matcher_model: &'a str,
    seed: u64,
    runs_per_cell: u32,
    variants: &'a [Variant],
    metrics: Vec<Metric>,
    problems: Vec<&'a str>,
    cells: usize,
    completed: usize,
    dropped: usize,
    cancelled: usize,
    failure_tags: BTreeMap<&'static str, usize>,
    correlation: Option<f64>,
    correlation_error: Option<String>,
    aggregates: &'a [AggregateRow],
}

/// Directory name for a model under `results/`.
pub fn model_slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn gateway(e: &LlmEndpoint, cache: Option<&Path>) -> Gateway {
    let cache = match e.kind {
        EndpointKind::Live => cache.map(PromptCache::new),
        EndpointKind::Replay => None,
    };
    Gateway::new(e.clone(), cache)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, PipelineError> {
    fs::write(&path, text).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Runs every (problem, variant, run) cell of the grid, then aggregates and
/// writes `cells.csv`, `timings.csv`, `summary.json` and `figures/` under
/// the output directory.
pub fn run_pipeline(cfg: &RunConfig, env: &PipelineEnv) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    let names = if cfg.problems.is_empty() {
        list_problems(&env.dataset)?
    } else {
        cfg.problems.clone()
    };
    let mut bundles = Vec::with_capacity(names.len());
    for name in &names {
        let dir = env.dataset.join(name);
        if !dir.is_dir() {
            return Err(DatasetError::MissingFile(dir).into());
        }
        bundles.push(load_bundle(&dir)?);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    fs::create_dir_all(&env.out).map_err(io(&env.out))?;

    let cache = env.cache_dir.as_deref();
    let generator = gateway(&cfg.endpoints.generator, cache);
    let matcher = gateway(&cfg.endpoints.matcher, cache);
    let paraphraser = cfg.endpoints.paraphraser.as_ref().map(|e| gateway(e, cache));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;

    let contexts: Vec<ProblemContext> = pool.install(|| {
        bundles
            .into_par_iter()
            .map(|b| ProblemContext::prepare(b, &env.solver, cfg.timeout(), &cfg.variants, paraphraser.as_ref()))
            .collect::<Result<_, _>>()
    })?;

    let slug = model_slug(&cfg.endpoints.generator.model_name);
    let cell_env = CellEnv {
        solver: &env.solver,
        generator: &generator,
        matcher: &matcher,
        metrics: &cfg.metrics,
        artifacts: Some((&env.out, &slug)),
    };
    let grid: Vec<(&ProblemContext, Variant, u32)> = contexts
        .iter()
        .flat_map(|ctx| {
            cfg.variants
                .iter()
                .flat_map(move |&v| (1..=cfg.runs_per_cell).map(move |r| (ctx, v, r)))
        })
        .collect();
    info!(cells = grid.len(), workers = cfg.workers, "running grid");
    let results: Vec<Option<CellResult>> = pool.install(|| {
        grid.par_iter()
            .map(|&(ctx, v, r)| {
                if env.cancel.load(Ordering::Relaxed) {
                    return None;
                }
                Some(run_cell(&cell_env, ctx, v, r))
            })
            .collect()
    });
    let cancelled = results.iter().filter(|r| r.is_none()).count();
    let cells: Vec<CellResult> = results.into_iter().flatten().collect();

    let aggregates = aggregate(&cells);
    let correlation = correlate_metrics(&cells);
    let mut files = vec![
        write(env.out.join("cells.csv"), &cells_csv(&cells)?)?,
        write(env.out.join("timings.csv"), &timings_csv(&cells)?)?,
    ];
    let mut failure_tags = BTreeMap::new();
    for t in cells.iter().filter_map(|c| c.failure_tag) {
        *failure_tags.entry(t.as_str()).or_default() += 1;
    }
    let summary = Summary {
        model: &cfg.endpoints.generator.model_name,
        matcher_model: &cfg.endpoints.matcher.model_name,
        seed: cfg.seed,
        runs_per_cell: cfg.runs_per_cell,
        variants: &cfg.variants,
        metrics: cfg.metrics.iter().copied().collect(),
        problems: contexts.iter().map(|c| c.name()).collect(),
        cells: cells.len(),
        completed: cells.iter().filter(|c| !c.dropped()).count(),
        dropped: cells.iter().filter(|c| c.dropped()).count(),
        cancelled,
        failure_tags,
        correlation: correlation.as_ref().ok().copied(),
        correlation_error: correlation.as_ref().err().map(|e| e.to_string()),
        aggregates: &aggregates.rows,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    files.push(write(env.out.join("summary.json"), &text)?);
    if !aggregates.is_empty() {
        let report = Report {
            model: cfg.endpoints.generator.model_name.clone(),
            aggregates: aggregates.clone(),
            timings: timing_rows(&cells),
        };
        files.extend(render(&report, &FigureKind::ALL.into(), &env.out.join("figures"))?);
    }
    info!(cells = cells.len(), cancelled, "pipeline finished");
    Ok(PipelineOutcome {
        cells,
        aggregates,
        correlation,
        cancelled,
        files,
    })
}

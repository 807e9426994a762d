use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::CellResult;
use crate::config::Metric;
use crate::stats::{AggregateResult, ScoreKind, ALL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    ScatterSyntacticSemantic,
    HeatmapPerProblem,
    BarsWithCi,
    MetricDiffBars,
    TimingBars,
}

impl FigureKind {
    pub const ALL: [FigureKind; 5] = [
        FigureKind::ScatterSyntacticSemantic,
        FigureKind::HeatmapPerProblem,
        FigureKind::BarsWithCi,
        FigureKind::MetricDiffBars,
        FigureKind::TimingBars,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureKind::ScatterSyntacticSemantic => "scatter_syntactic_semantic",
            FigureKind::HeatmapPerProblem => "heatmap_per_problem",
            FigureKind::BarsWithCi => "bars_with_ci",
            FigureKind::MetricDiffBars => "metric_diff_bars",
            FigureKind::TimingBars => "timing_bars",
        }
    }

    /// Whether the file carries wall times and so differs between runs.
    pub fn is_timing(self) -> bool {
        self == FigureKind::TimingBars
    }
}

impl fmt::Display for FigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureKind {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FigureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| ReportError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown figure kind `{0}`")]
    UnknownKind(String),
    #[error("nothing to render: no aggregates")]
    Empty,
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Mean evaluation wall time of one metric on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub problem: String,
    pub metric: Metric,
    pub mean_ms: f64,
    pub n: usize,
}

/// Everything the figures are rendered from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub aggregates: AggregateResult,
    pub timings: Vec<TimingRow>,
}

pub fn timing_rows(cells: &[CellResult]) -> Vec<TimingRow> {
    let mut acc: BTreeMap<(&str, Metric), Vec<f64>> = BTreeMap::new();
    for c in cells {
        for m in Metric::ALL {
            if let Some(d) = c.timings.metric(m) {
                acc.entry((&c.problem, m)).or_default().push(d.as_secs_f64() * 1000.0);
            }
        }
    }
    acc.into_iter()
        .map(|((problem, metric), v)| TimingRow {
            problem: problem.to_string(),
            metric,
            mean_ms: v.iter().sum::<f64>() / v.len() as f64,
            n: v.len(),
        })
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

/// CSV text of one figure. Pure: equal reports give identical text.
pub fn render_figure(report: &Report, kind: FigureKind) -> Result<String, ReportError> {
    let a = &report.aggregates;
    let model = report.model.as_str();
    let mean = |p: &str, v: &str, k: ScoreKind| a.get(p, v, k).filter(|r| r.n > 0).map(|r| r.mean);
    let cells: BTreeSet<(&str, &str)> = a
        .rows
        .iter()
        .map(|r| (r.problem.as_str(), r.variant.as_str()))
        .collect();
    match kind {
        FigureKind::ScatterSyntacticSemantic => {
            let rows = cells
                .iter()
                .filter(|(p, _)| *p == ALL)
                .map(|&(p, v)| {
                    vec![
                        model.to_string(),
                        v.to_string(),
                        opt(mean(p, v, ScoreKind::Syntactic)),
                        opt(mean(p, v, ScoreKind::ModelBased)),
                        opt(mean(p, v, ScoreKind::TestSuite)),
                    ]
                })
                .collect();
            csv_text(&["model", "variant", "syntactic", "model_based", "test_suite"], rows)
        }
        FigureKind::HeatmapPerProblem => {
            let rows = a
                .rows
                .iter()
                .filter(|r| r.problem != ALL && r.n > 0)
                .map(|r| {
                    vec![
                        model.to_string(),
                        r.problem.clone(),
                        r.variant.clone(),
                        r.metric.to_string(),
                        num(r.mean),
                    ]
                })
                .collect();
            csv_text(&["model", "problem", "variant", "metric", "mean"], rows)
        }
        FigureKind::BarsWithCi => {
            let rows = a
                .rows
                .iter()
                .map(|r| {
                    vec![
                        model.to_string(),
                        r.problem.clone(),
                        r.variant.clone(),
                        r.metric.to_string(),
                        num(r.mean),
                        num(r.half_width),
                        r.n.to_string(),
                        r.flags.join(";"),
                    ]
                })
                .collect();
            csv_text(
                &[
                    "model",
                    "problem",
                    "variant",
                    "metric",
                    "mean",
                    "half_width",
                    "n",
                    "flags",
                ],
                rows,
            )
        }
        FigureKind::MetricDiffBars => {
            let rows = cells
                .iter()
                .filter_map(|&(p, v)| {
                    let mb = mean(p, v, ScoreKind::ModelBased)?;
                    let ts = mean(p, v, ScoreKind::TestSuite)?;
                    Some(vec![
                        model.to_string(),
                        p.to_string(),
                        v.to_string(),
                        num(mb),
                        num(ts),
                        num(ts - mb),
                    ])
                })
                .collect();
            csv_text(
                &["model", "problem", "variant", "model_based", "test_suite", "difference"],
                rows,
            )
        }
        FigureKind::TimingBars => {
            let rows = report
                .timings
                .iter()
                .map(|t| {
                    vec![
                        model.to_string(),
                        t.problem.clone(),
                        t.metric.to_string(),
                        format!("{:.3}", t.mean_ms),
                        t.n.to_string(),
                    ]
                })
                .collect();
            csv_text(&["model", "problem", "metric", "mean_ms", "n"], rows)
        }
    }
}

/// Writes `<kind>.csv` under `dir` for every requested kind.
pub fn render(report: &Report, kinds: &BTreeSet<FigureKind>, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if report.aggregates.is_empty() {
        return Err(ReportError::Empty);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut out = Vec::new();
    for &k in kinds {
        let path = dir.join(format!("{k}.csv"));
        fs::write(&path, render_figure(report, k)?).map_err(io(&path))?;
        out.push(path);
    }
    Ok(out)
}

/// One row per cell, without wall times.
pub fn cells_csv(cells: &[CellResult]) -> Result<String, ReportError> {
    let rows = cells
        .iter()
        .map(|c| {
            let mb = c.model_based;
            vec![
                c.problem.clone(),
                c.variant.to_string(),
                c.run_index.to_string(),
                u8::from(c.syntactic_ok).to_string(),
                opt(mb.map(|s| s.precision)),
                opt(mb.map(|s| s.recall)),
                opt(mb.map(|s| s.f1)),
                opt(c.suite_accuracy),
                c.failure_tag.map(|t| t.as_str()).unwrap_or_default().to_string(),
                c.artifacts.clone(),
                c.detail.clone(),
            ]
        })
        .collect();
    csv_text(
        &[
            "problem",
            "variant",
            "run",
            "syntactic",
            "precision",
            "recall",
            "f1",
            "suite_accuracy",
            "failure_tag",
            "artifacts",
            "detail",
        ],
        rows,
    )
}

/// Wall times per cell, in milliseconds.
pub fn timings_csv(cells: &[CellResult]) -> Result<String, ReportError> {
    let ms = |d: std::time::Duration| format!("{:.3}", d.as_secs_f64() * 1000.0);
    let rows = cells
        .iter()
        .map(|c| {
            let t = &c.timings;
            vec![
                c.problem.clone(),
                c.variant.to_string(),
                c.run_index.to_string(),
                ms(t.generate),
                ms(t.syntax),
                t.model_based.map(ms).unwrap_or_default(),
                t.test_suite.map(ms).unwrap_or_default(),
            ]
        })
        .collect();
    csv_text(
        &[
            "problem",
            "variant",
            "run",
            "generate_ms",
            "syntax_ms",
            "model_based_ms",
            "test_suite_ms",
        ],
        rows,
    )
}

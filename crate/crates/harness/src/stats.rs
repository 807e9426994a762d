use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cell::{CellResult, FailureTag};
use crate::config::Metric;

/// Group label pooling every problem or every variant.
pub const ALL: &str = "all";

/// Confidence level of the reported intervals.
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Share of runs whose program passes the syntax gate.
    Syntactic,
    /// Model-based F1.
    ModelBased,
    /// Test-suite accuracy.
    TestSuite,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 3] = [ScoreKind::Syntactic, ScoreKind::ModelBased, ScoreKind::TestSuite];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Syntactic => "syntactic",
            ScoreKind::ModelBased => "model_based",
            ScoreKind::TestSuite => "test_suite",
        }
    }

    fn of(self, c: &CellResult) -> Option<f64> {
        match self {
            ScoreKind::Syntactic => Some(if c.syntactic_ok { 1.0 } else { 0.0 }),
            ScoreKind::ModelBased => c.score(Metric::ModelBased),
            ScoreKind::TestSuite => c.score(Metric::TestSuite),
        }
    }
}

impl From<Metric> for ScoreKind {
    fn from(m: Metric) -> Self {
        match m {
            Metric::ModelBased => ScoreKind::ModelBased,
            Metric::TestSuite => ScoreKind::TestSuite,
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Problem name or [`ALL`].
    pub problem: String,
    /// Variant name or [`ALL`].
    pub variant: String,
    pub metric: ScoreKind,
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
    /// Cells of the group dropped by harness errors.
    pub dropped: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    /// Sorted by problem, variant, metric; [`ALL`] groups included.
    pub rows: Vec<AggregateRow>,
}

impl AggregateResult {
    pub fn get(&self, problem: &str, variant: &str, metric: ScoreKind) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.problem == problem && r.variant == variant && r.metric == metric)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 paired scores, got {0}")]
    TooFewPairs(usize),
    #[error("one of the score vectors has zero variance")]
    DegenerateVariance,
}

/// Two-sided critical value of Student's t with `df` degrees of freedom.
pub fn t_critical(df: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.5 + CONFIDENCE / 2.0)
}

/// Mean and Student-t confidence half-width of `values`. The values are
/// summed in sorted order, so the result does not depend on input order.
/// Half-width is 0 for a single value or when all values are equal.
pub fn mean_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 || v[0] == v[n - 1] {
        return (v[0], 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, t_critical(n - 1) * sd / (n as f64).sqrt())
}

/// Means and confidence half-widths per (problem, variant, score kind), plus
/// the pooled groups over all problems and all variants.
///
/// Dropped cells are counted but not scored. A score kind appears only when
/// some cell carries it.
pub fn aggregate(cells: &[CellResult]) -> AggregateResult {
    let kinds: Vec<ScoreKind> = ScoreKind::ALL
        .into_iter()
        .filter(|k| cells.iter().any(|c| k.of(c).is_some()))
        .collect();

    #[derive(Default)]
    struct Group {
        scores: BTreeMap<ScoreKind, Vec<f64>>,
        dropped: usize,
        unfinished: usize,
    }
    let mut groups: BTreeMap<(String, String), Group> = BTreeMap::new();
    for c in cells {
        let variant = c.variant.as_str();
        for key in [
            (c.problem.as_str(), variant),
            (c.problem.as_str(), ALL),
            (ALL, variant),
            (ALL, ALL),
        ] {
            let g = groups.entry((key.0.to_string(), key.1.to_string())).or_default();
            if c.dropped() {
                g.dropped += 1;
                continue;
            }
            if matches!(c.failure_tag, Some(FailureTag::Timeout | FailureTag::Partial)) {
                g.unfinished += 1;
            }
            for &k in &kinds {
                if let Some(s) = k.of(c) {
                    g.scores.entry(k).or_default().push(s);
                }
            }
        }
    }

    let mut rows = Vec::new();
    for ((problem, variant), g) in groups {
        for &k in &kinds {
            let values = g.scores.get(&k).map(Vec::as_slice).unwrap_or_default();
            let (mean, half_width) = mean_half_width(values);
            let mut flags = Vec::new();
            match values.len() {
                0 => flags.push("no_data".to_string()),
                1 => flags.push("n=1".to_string()),
                _ => {}
            }
            if g.dropped > 0 {
                flags.push(format!("dropped={}", g.dropped));
            }
            if g.unfinished > 0 && k != ScoreKind::Syntactic {
                flags.push(format!("unfinished={}", g.unfinished));
            }
            rows.push(AggregateRow {
                problem: problem.clone(),
                variant: variant.clone(),
                metric: k,
                mean: mean.clamp(0.0, 1.0),
                half_width,
                n: values.len(),
                dropped: g.dropped,
                flags,
            });
        }
    }
    AggregateResult { rows }
}

/// Pearson correlation coefficient of paired samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation between model-based F1 and suite accuracy over the cells
/// that carry both. Cells are taken in (problem, variant, run) order.
pub fn correlate_metrics(cells: &[CellResult]) -> Result<f64, StatsError> {
    let mut paired: Vec<(&CellResult, f64, f64)> = cells
        .iter()
        .filter(|c| !c.dropped())
        .filter_map(|c| Some((c, c.score(Metric::ModelBased)?, c.score(Metric::TestSuite)?)))
        .collect();
    paired.sort_by(|a, b| a.0.key().cmp(&b.0.key()));
    let xs: Vec<f64> = paired.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = paired.iter().map(|p| p.2).collect();
    pearson(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_scores_have_no_spread() {
        assert_eq!(mean_half_width(&[1.0; 5]), (1.0, 0.0));
        assert_eq!(mean_half_width(&[0.1; 3]), (0.1, 0.0));
        assert_eq!(mean_half_width(&[0.4]), (0.4, 0.0));
    }

    #[test]
    fn two_point_correlations() {
        assert_eq!(pearson(&[0.0, 1.0], &[1.0, 0.0]), Ok(-1.0));
        assert_eq!(pearson(&[0.2, 0.7], &[0.2, 0.7]), Ok(1.0));
        assert_eq!(pearson(&[0.5], &[0.5]), Err(StatsError::TooFewPairs(1)));
        assert_eq!(pearson(&[0.5, 0.5], &[0.1, 0.9]), Err(StatsError::DegenerateVariance));
    }
}

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use aspbench_llm::LlmEndpoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which description text the generator is prompted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Paraphrase1,
    Paraphrase2,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Original, Variant::Paraphrase1, Variant::Paraphrase2];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Paraphrase1 => "paraphrase1",
            Variant::Paraphrase2 => "paraphrase2",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| ConfigError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ModelBased,
    TestSuite,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::ModelBased, Metric::TestSuite];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ModelBased => "model_based",
            Metric::TestSuite => "test_suite",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = ConfigError;

    /// Accepts `model_based` or `model-based`, `test_suite` or `test-suite`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().replace('-', "_");
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| ConfigError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown variant `{0}` (expected original, paraphrase1 or paraphrase2)")]
    UnknownVariant(String),
    #[error("unknown metric `{0}` (expected model-based or test-suite)")]
    UnknownMetric(String),
    #[error("runs per cell must be at least 1")]
    NoRuns,
    #[error("no description variants selected")]
    NoVariants,
    #[error("no metrics selected")]
    NoMetrics,
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("timeout must be positive")]
    ZeroTimeout,
}

/// The models behind the three roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub generator: LlmEndpoint,
    pub matcher: LlmEndpoint,
    /// Only consulted for bundles that ship no paraphrase.
    #[serde(default)]
    pub paraphraser: Option<LlmEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Empty selects every bundle in the dataset.
    pub problems: Vec<String>,
    pub variants: Vec<Variant>,
    pub runs_per_cell: u32,
    pub endpoints: Endpoints,
    pub metrics: BTreeSet<Metric>,
    /// Recorded in the summary; replayed runs ignore it.
    pub seed: u64,
    pub workers: usize,
    /// Overrides the per-bundle solver timeout.
    pub timeout_secs: Option<u64>,
}

impl RunConfig {
    pub fn new(endpoints: Endpoints) -> Self {
        RunConfig {
            problems: Vec::new(),
            variants: Variant::ALL.to_vec(),
            runs_per_cell: 5,
            endpoints,
            metrics: Metric::ALL.into(),
            seed: 0,
            workers: 1,
            timeout_secs: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs_per_cell == 0 {
            return Err(ConfigError::NoRuns);
        }
        if self.variants.is_empty() {
            return Err(ConfigError::NoVariants);
        }
        if self.metrics.is_empty() {
            return Err(ConfigError::NoMetrics);
        }
        if self.workers == 0 {
            return Err(ConfigError::NoWorkers);
        }
        if self.timeout_secs == Some(0) {
            return Err(ConfigError::ZeroTimeout);
        }
        Ok(())
    }

    pub fn timeout(&self) -> Option<Duration> {
        self.timeout_secs.map(Duration::from_secs)
    }
}

/// Parses a comma-separated list, ignoring blanks and duplicates but
/// keeping first-seen order.
pub fn parse_list<T: FromStr + PartialEq>(s: &str) -> Result<Vec<T>, T::Err> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v = part.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        let e = LlmEndpoint::replay("fixtures", "m");
        RunConfig::new(Endpoints {
            generator: e.clone(),
            matcher: e,
            paraphraser: None,
        })
    }

    #[test]
    fn defaults_cover_the_full_grid() {
        let c = cfg();
        assert_eq!(c.runs_per_cell, 5);
        assert_eq!(c.variants.len(), 3);
        assert_eq!(c.metrics.len(), 2);
        assert_eq!(c.validate(), Ok(()));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg();
        c.runs_per_cell = 0;
        assert_eq!(c.validate(), Err(ConfigError::NoRuns));
        let mut c = cfg();
        c.variants.clear();
        assert_eq!(c.validate(), Err(ConfigError::NoVariants));
        let mut c = cfg();
        c.metrics.clear();
        assert_eq!(c.validate(), Err(ConfigError::NoMetrics));
    }

    #[test]
    fn lists_parse() {
        assert_eq!(
            parse_list::<Variant>("original, paraphrase2,original").unwrap(),
            [Variant::Original, Variant::Paraphrase2]
        );
        assert_eq!(parse_list::<Metric>("model-based,test_suite").unwrap(), Metric::ALL);
        assert_eq!(
            parse_list::<Variant>("original,para"),
            Err(ConfigError::UnknownVariant("para".into()))
        );
    }
}

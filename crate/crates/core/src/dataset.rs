//! Problem bundles: description, gold program, predicate manifest,
//! instances and test suite.
//!
//! ```text
//! <root>/<problem>/
//!     description.md
//!     paraphrase1.md        optional
//!     paraphrase2.md        optional
//!     gold.lp
//!     manifest.toml
//!     instances/<name>.lp
//!     tests.suite.lp
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_eval::{evaluate_model_based, EvalConfig, EvalError, Instance};
use crate::solver::{Solver, SolverError, SyntaxCheck};
use crate::suite::{parse_suite, run_suite, SuiteError, TestSuite};
use crate::syntax::{parse_program, PredicateSignature, Program, RuleKind};

/// Environment variable naming the dataset root.
pub const DATASET_ENV: &str = "ASPBENCH_DATASET";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} does not exist")]
    DatasetRootMissing(PathBuf),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid manifest {path}: {message}")]
    InvalidManifest { path: PathBuf, message: String },
    #[error("manifest of {problem} does not match its files: {message}")]
    ManifestMismatch { problem: String, message: String },
    #[error("{path}: {message}")]
    InvalidProgram { path: PathBuf, message: String },
    #[error("suite of {problem}: {source}")]
    Suite { problem: String, source: SuiteError },
    #[error("gold self-test of {problem} failed: {message}")]
    GoldSelfTestFailure { problem: String, message: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSettings {
    pub count: usize,
    pub seed: u64,
}

impl Default for MutationSettings {
    fn default() -> Self {
        Self { count: 15, seed: 1 }
    }
}

/// A surviving mutant judged equivalent to the gold program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicatedSurvivor {
    pub source_hash: String,
    pub lineage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub input_predicates: BTreeSet<PredicateSignature>,
    pub output_predicates: BTreeSet<PredicateSignature>,
    pub has_optimization: bool,
    pub timeout_secs: u64,
    /// Instance file stems under `instances/`, in evaluation order.
    pub instances: Vec<String>,
    #[serde(default)]
    pub mutation: MutationSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adjudicated_survivors: Vec<AdjudicatedSurvivor>,
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn adjudicated_hashes(&self) -> BTreeSet<String> {
        self.adjudicated_survivors
            .iter()
            .map(|s| s.source_hash.clone())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ProblemBundle {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub description_original: String,
    pub paraphrase_1: Option<String>,
    pub paraphrase_2: Option<String>,
    pub gold: Program,
    pub instances: Vec<Instance>,
    pub suite: TestSuite,
}

impl ProblemBundle {
    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    pub fn input_preds(&self) -> &BTreeSet<PredicateSignature> {
        &self.manifest.input_predicates
    }

    pub fn output_preds(&self) -> &BTreeSet<PredicateSignature> {
        &self.manifest.output_predicates
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.manifest.timeout_secs)
    }

    pub fn has_optimization(&self) -> bool {
        self.manifest.has_optimization
    }

    /// Runs the gold program through both metrics; both must be perfect.
    pub fn self_test(&self, solver: &Solver) -> Result<(), DatasetError> {
        let fail = |message: String| DatasetError::GoldSelfTestFailure {
            problem: self.name().to_string(),
            message,
        };
        if let SyntaxCheck::SyntaxError(e) = solver.check_program(&self.gold, self.timeout())? {
            return Err(fail(format!("gold does not ground: {e}")));
        }
        let cfg = EvalConfig {
            timeout: self.timeout(),
            ..EvalConfig::default()
        };
        let o = evaluate_model_based(
            solver,
            &self.gold,
            &self.gold,
            &self.instances,
            self.output_preds(),
            &cfg,
        )?;
        if o.partial || o.scores.f1 != 1.0 || o.scores.wm_count != 0 {
            return Err(fail(format!(
                "model-based F1 {} (wm {}, partial {})",
                o.scores.f1, o.scores.wm_count, o.partial
            )));
        }
        let s = run_suite(solver, &self.gold, &self.suite, self.timeout())?;
        if s.accuracy != 1.0 {
            let failing: Vec<_> = s
                .cases
                .iter()
                .filter(|c| !c.outcome.passed())
                .map(|c| format!("{}: {:?}", c.name, c.outcome))
                .collect();
            return Err(fail(format!("suite accuracy {}: {failing:?}", s.accuracy)));
        }
        Ok(())
    }
}

/// `$ASPBENCH_DATASET`, else `problems` in the working directory.
pub fn default_root() -> PathBuf {
    std::env::var_os(DATASET_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("problems"))
}

/// Names of the bundles under `root` (directories with a manifest), sorted.
pub fn list_problems(root: &Path) -> Result<Vec<String>, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::DatasetRootMissing(root.to_path_buf()));
    }
    let entries = fs::read_dir(root).map_err(|source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut names: Vec<String> = entries
        .filter_map(Result::ok)
        .filter(|e| e.path().join("manifest.toml").is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    if names.is_empty() {
        tracing::warn!("no problem bundles under {}", root.display());
    }
    Ok(names)
}

fn read(path: &Path) -> Result<String, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_optional(path: &Path) -> Result<Option<String>, DatasetError> {
    if path.is_file() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

fn program(path: &Path) -> Result<Program, DatasetError> {
    parse_program(&read(path)?).map_err(|e| DatasetError::InvalidProgram {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads a bundle and checks everything that needs no solver.
pub fn load_bundle(dir: &Path) -> Result<ProblemBundle, DatasetError> {
    let manifest_path = dir.join("manifest.toml");
    let manifest = Manifest::from_toml(&read(&manifest_path)?).map_err(|e| DatasetError::InvalidManifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let problem = manifest.name.clone();
    let mismatch = |message: String| DatasetError::ManifestMismatch {
        problem: problem.clone(),
        message,
    };
    if dir.file_name().and_then(|n| n.to_str()) != Some(problem.as_str()) {
        return Err(mismatch(format!("directory is not named `{problem}`")));
    }

    let gold = program(&dir.join("gold.lp"))?;
    let gold_preds = gold.predicates();
    for sig in manifest.input_predicates.iter().chain(&manifest.output_predicates) {
        if !gold_preds.contains(sig) {
            return Err(mismatch(format!("{sig} does not occur in gold.lp")));
        }
    }
    if let Some(sig) = manifest
        .input_predicates
        .intersection(&manifest.output_predicates)
        .next()
    {
        return Err(mismatch(format!("{sig} is declared both input and output")));
    }
    if manifest.has_optimization != gold.has_weak_constraints() {
        return Err(mismatch(format!(
            "has_optimization = {} but gold {} weak constraints",
            manifest.has_optimization,
            if gold.has_weak_constraints() { "has" } else { "has no" }
        )));
    }
    if manifest.timeout_secs == 0 {
        return Err(mismatch("timeout_secs must be positive".into()));
    }

    let facts_only = |p: &Program, what: &str| -> Result<(), DatasetError> {
        if let Some(r) = p
            .rules()
            .iter()
            .find(|r| !matches!(r.kind, RuleKind::Fact | RuleKind::Comment))
        {
            return Err(mismatch(format!("{what} contains a non-fact `{}`", r.text)));
        }
        if let Some(sig) = p
            .predicates()
            .into_iter()
            .find(|s| !manifest.input_predicates.contains(s))
        {
            return Err(mismatch(format!("{what} uses non-input predicate {sig}")));
        }
        Ok(())
    };

    if manifest.instances.is_empty() {
        return Err(mismatch("no instances declared".into()));
    }
    let mut instances = Vec::new();
    for name in &manifest.instances {
        let facts = program(&dir.join("instances").join(format!("{name}.lp")))?;
        facts_only(&facts, &format!("instance {name}"))?;
        instances.push(Instance {
            id: name.clone(),
            facts,
        });
    }

    let suite = parse_suite(&read(&dir.join("tests.suite.lp"))?)
        .map_err(|source| DatasetError::Suite {
            problem: problem.clone(),
            source,
        })?
        .with_outputs(&manifest.output_predicates);
    for case in &suite.cases {
        facts_only(&case.facts, &format!("suite case {}", case.name))?;
    }

    Ok(ProblemBundle {
        root: dir.to_path_buf(),
        description_original: read(&dir.join("description.md"))?,
        paraphrase_1: read_optional(&dir.join("paraphrase1.md"))?,
        paraphrase_2: read_optional(&dir.join("paraphrase2.md"))?,
        gold,
        instances,
        suite,
        manifest,
    })
}

/// `load_bundle` followed by the gold self-test.
pub fn load_validated(dir: &Path, solver: &Solver) -> Result<ProblemBundle, DatasetError> {
    let b = load_bundle(dir)?;
    b.self_test(solver)?;
    Ok(b)
}

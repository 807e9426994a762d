use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use aspbench_core::dataset::ProblemBundle;
use aspbench_core::model_eval::{
    compute_scores, evaluate_instance, gold_models, EvalConfig, EvalError, GoldModels, InstanceFailure,
    ModelEvalOutcome, ModelSets, Scores,
};
use aspbench_core::solver::{SolveStatus, Solver, SolverError, SyntaxCheck};
use aspbench_core::suite::{run_suite, CaseOutcome, SuiteResult};
use aspbench_core::syntax::{parse_program, PredicateMapping, Program, SyntaxError};
use aspbench_llm::{Gateway, LlmError, Stage};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::config::{Metric, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureTag {
    SyntaxError,
    NoSemanticMatch,
    UnparseableMapping,
    MappingCollision,
    Timeout,
    Partial,
    /// Endpoint, solver or file-system failure; the cell is dropped from
    /// the aggregates.
    HarnessError,
}

impl FailureTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureTag::SyntaxError => "syntax_error",
            FailureTag::NoSemanticMatch => "no_semantic_match",
            FailureTag::UnparseableMapping => "unparseable_mapping",
            FailureTag::MappingCollision => "mapping_collision",
            FailureTag::Timeout => "timeout",
            FailureTag::Partial => "partial",
            FailureTag::HarnessError => "harness_error",
        }
    }
}

/// Wall times of the stages of one cell; kept out of the deterministic
/// reports.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellTimings {
    pub generate: Duration,
    pub syntax: Duration,
    pub model_based: Option<Duration>,
    pub test_suite: Option<Duration>,
}

impl CellTimings {
    pub fn metric(&self, m: Metric) -> Option<Duration> {
        match m {
            Metric::ModelBased => self.model_based,
            Metric::TestSuite => self.test_suite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub problem: String,
    pub variant: Variant,
    pub run_index: u32,
    pub syntactic_ok: bool,
    /// Present when the metric was requested and the cell was not dropped.
    pub model_based: Option<Scores>,
    pub suite_accuracy: Option<f64>,
    pub failure_tag: Option<FailureTag>,
    pub detail: String,
    /// Artifact directory relative to the output root; empty when
    /// artifacts are not kept.
    pub artifacts: String,
    #[serde(skip)]
    pub timings: CellTimings,
}

impl CellResult {
    pub fn dropped(&self) -> bool {
        self.failure_tag == Some(FailureTag::HarnessError)
    }

    pub fn score(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::ModelBased => self.model_based.map(|s| s.f1),
            Metric::TestSuite => self.suite_accuracy,
        }
    }

    pub fn key(&self) -> (&str, Variant, u32) {
        (&self.problem, self.variant, self.run_index)
    }
}

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error("gold models of {problem}: {source}")]
    Gold { problem: String, source: EvalError },
    #[error("paraphrasing {problem}: {source}")]
    Paraphrase { problem: String, source: LlmError },
    #[error("{problem} ships no {variant} text and no paraphraser endpoint is configured")]
    NoParaphraser { problem: String, variant: Variant },
}

/// A bundle with its gold models and the description text of every
/// requested variant, shared by all cells of the problem.
#[derive(Debug, Clone)]
pub struct ProblemContext {
    pub bundle: ProblemBundle,
    /// Gold models per instance, in instance order.
    pub gold: Vec<GoldModels>,
    pub descriptions: BTreeMap<Variant, String>,
    pub timeout: Duration,
}

impl ProblemContext {
    pub fn prepare(
        bundle: ProblemBundle,
        solver: &Solver,
        timeout: Option<Duration>,
        variants: &[Variant],
        paraphraser: Option<&Gateway>,
    ) -> Result<Self, PrepareError> {
        let problem = bundle.name().to_string();
        let timeout = timeout.unwrap_or_else(|| bundle.timeout());
        let gold = bundle
            .instances
            .iter()
            .map(|inst| gold_models(solver, &bundle.gold, inst, bundle.output_preds(), timeout))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| PrepareError::Gold {
                problem: problem.clone(),
                source,
            })?;

        let mut descriptions = BTreeMap::new();
        let original = bundle.description_original.clone();
        let needs_first = variants.iter().any(|v| *v != Variant::Original);
        let first = if needs_first {
            Some(paraphrased(&bundle, paraphraser, Variant::Paraphrase1, &original)?)
        } else {
            None
        };
        for &v in variants {
            let text = match v {
                Variant::Original => original.clone(),
                Variant::Paraphrase1 => first.clone().unwrap_or_default(),
                Variant::Paraphrase2 => paraphrased(
                    &bundle,
                    paraphraser,
                    Variant::Paraphrase2,
                    first.as_deref().unwrap_or_default(),
                )?,
            };
            descriptions.insert(v, text);
        }
        Ok(ProblemContext {
            bundle,
            gold,
            descriptions,
            timeout,
        })
    }

    pub fn name(&self) -> &str {
        self.bundle.name()
    }
}

fn paraphrased(
    bundle: &ProblemBundle,
    paraphraser: Option<&Gateway>,
    variant: Variant,
    input: &str,
) -> Result<String, PrepareError> {
    let (shipped, stage) = match variant {
        Variant::Paraphrase1 => (bundle.paraphrase_1.as_deref(), Stage::First),
        _ => (bundle.paraphrase_2.as_deref(), Stage::Second),
    };
    let problem = bundle.name().to_string();
    if let Some(text) = shipped.filter(|t| !t.trim().is_empty()) {
        return Ok(text.to_string());
    }
    let gw = paraphraser.ok_or_else(|| PrepareError::NoParaphraser {
        problem: problem.clone(),
        variant,
    })?;
    gw.paraphrase_or_shipped(None, input, stage)
        .map_err(|source| PrepareError::Paraphrase { problem, source })
}

/// Everything a cell needs besides its problem.
pub struct CellEnv<'a> {
    pub solver: &'a Solver,
    pub generator: &'a Gateway,
    pub matcher: &'a Gateway,
    pub metrics: &'a BTreeSet<Metric>,
    /// Output root and the model directory name under `results/`; `None`
    /// keeps no artifacts.
    pub artifacts: Option<(&'a Path, &'a str)>,
}

/// Wrong models kept in `evaluation.json`, per cell.
const WRONG_MODEL_SAMPLE: usize = 20;

/// Evaluation record persisted next to the other artifacts of a cell.
#[derive(Debug, Serialize)]
struct Evaluation<'a> {
    model_based: Option<ModelBasedRecord<'a>>,
    test_suite: Option<&'a SuiteResult>,
}

#[derive(Debug, Serialize)]
struct ModelBasedRecord<'a> {
    scores: &'a Scores,
    partial: bool,
    failures: &'a [InstanceFailure],
    /// `(instance, model)` for the first wrong models.
    wrong_models: Vec<(&'a str, String)>,
}

impl<'a> ModelBasedRecord<'a> {
    fn new(o: &'a ModelEvalOutcome) -> Self {
        ModelBasedRecord {
            scores: &o.scores,
            partial: o.partial,
            failures: &o.failures,
            wrong_models: o
                .sets
                .wm
                .iter()
                .take(WRONG_MODEL_SAMPLE)
                .map(|(i, m)| (i.as_str(), m.to_facts().trim_end().to_string()))
                .collect(),
        }
    }
}

struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    fn write(&self, name: &str, contents: &str) -> std::io::Result<()> {
        match &self.dir {
            Some(d) => fs::write(d.join(name), contents),
            None => Ok(()),
        }
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> std::io::Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, &text)
    }
}

enum Stop {
    Tag(FailureTag, String),
    Harness(String),
}

impl From<std::io::Error> for Stop {
    fn from(e: std::io::Error) -> Self {
        Stop::Harness(format!("writing artifacts: {e}"))
    }
}

impl From<LlmError> for Stop {
    fn from(e: LlmError) -> Self {
        Stop::Harness(format!("endpoint: {e}"))
    }
}

impl From<SolverError> for Stop {
    fn from(e: SolverError) -> Self {
        Stop::Harness(format!("solver: {e}"))
    }
}

impl From<EvalError> for Stop {
    fn from(e: EvalError) -> Self {
        Stop::Harness(format!("evaluation: {e}"))
    }
}

/// Generate, gate on syntax, match, normalize and score one run.
///
/// Failures never propagate: they end up as the failure tag of the cell.
pub fn run_cell(env: &CellEnv<'_>, ctx: &ProblemContext, variant: Variant, run_index: u32) -> CellResult {
    let problem = ctx.name().to_string();
    let (dir, rel) = match env.artifacts {
        Some((root, model)) => {
            let rel = format!("results/{model}/{problem}/{variant}/{run_index}");
            (Some(root.join(&rel)), rel)
        }
        None => (None, String::new()),
    };
    let mut cell = CellResult {
        problem,
        variant,
        run_index,
        syntactic_ok: false,
        model_based: None,
        suite_accuracy: None,
        failure_tag: None,
        detail: String::new(),
        artifacts: rel,
        timings: CellTimings::default(),
    };
    let art = Artifacts { dir };
    if let Some(d) = &art.dir {
        if let Err(e) = fs::create_dir_all(d) {
            cell.failure_tag = Some(FailureTag::HarnessError);
            cell.detail = format!("creating {}: {e}", d.display());
            return cell;
        }
    }
    match pipeline_stages(env, ctx, &mut cell, &art) {
        Ok(()) => {}
        Err(Stop::Tag(tag, detail)) => {
            // Gate failures score zero on every requested metric.
            cell.failure_tag = Some(tag);
            cell.detail = detail;
            if env.metrics.contains(&Metric::ModelBased) {
                cell.model_based = Some(zero_scores(ctx));
            }
            if env.metrics.contains(&Metric::TestSuite) {
                cell.suite_accuracy = Some(0.0);
            }
        }
        Err(Stop::Harness(detail)) => {
            warn!(problem = %cell.problem, %variant, run_index, "cell dropped: {detail}");
            cell.failure_tag = Some(FailureTag::HarnessError);
            cell.detail = detail;
            cell.model_based = None;
            cell.suite_accuracy = None;
        }
    }
    if let Err(e) = art.json("cell.json", &cell) {
        warn!("writing cell record: {e}");
    }
    cell
}

fn zero_scores(ctx: &ProblemContext) -> Scores {
    let gm = ctx.gold.iter().map(|g| g.models.len()).sum();
    Scores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        gm_count: gm,
        cgm_count: 0,
        wm_count: 0,
        tpm_count: 0,
    }
}

fn pipeline_stages(
    env: &CellEnv<'_>,
    ctx: &ProblemContext,
    cell: &mut CellResult,
    art: &Artifacts,
) -> Result<(), Stop> {
    let bundle = &ctx.bundle;
    let description = &ctx.descriptions[&cell.variant];

    let t = Instant::now();
    let generated = env.generator.generate_program(description, cell.run_index)?;
    cell.timings.generate = t.elapsed();
    art.json("generator.json", &generated)?;
    art.write("candidate.lp", &generated.response_clean)?;

    let t = Instant::now();
    let candidate =
        parse_program(&generated.response_clean).map_err(|e| Stop::Tag(FailureTag::SyntaxError, e.to_string()))?;
    let check = env.solver.check_program(&candidate, ctx.timeout)?;
    cell.timings.syntax = t.elapsed();
    match check {
        SyntaxCheck::Ok => cell.syntactic_ok = true,
        SyntaxCheck::SyntaxError(e) => return Err(Stop::Tag(FailureTag::SyntaxError, e)),
        SyntaxCheck::Timeout => {
            cell.syntactic_ok = true;
            return Err(Stop::Tag(
                FailureTag::Timeout,
                "grounding the candidate timed out".into(),
            ));
        }
    }
    if candidate.is_empty() {
        return Err(Stop::Tag(FailureTag::NoSemanticMatch, "candidate has no rules".into()));
    }

    let matched = env.matcher.match_predicates(&bundle.gold, &candidate, cell.run_index)?;
    art.json("matcher.json", &matched.record)?;
    let mapping = match matched.mapping {
        Ok(PredicateMapping::NoSemanticMatch) => {
            art.json("mapping.json", &PredicateMapping::NoSemanticMatch)?;
            return Err(Stop::Tag(
                FailureTag::NoSemanticMatch,
                "matcher found no semantic match".into(),
            ));
        }
        Ok(m) => m,
        Err(e) => return Err(Stop::Tag(FailureTag::UnparseableMapping, e.to_string())),
    };
    art.json("mapping.json", &mapping)?;
    let renamed = candidate.rename_predicates(&mapping).map_err(|e| match e {
        SyntaxError::MappingCollision(m) => Stop::Tag(FailureTag::MappingCollision, m),
        other => Stop::Tag(FailureTag::UnparseableMapping, other.to_string()),
    })?;
    let normalized = renamed.strip_input_facts(bundle.input_preds());
    art.write("normalized.lp", &normalized.to_source())?;

    // Both metrics see the same normalized candidate.
    let mut model_outcome = None;
    if env.metrics.contains(&Metric::ModelBased) {
        let t = Instant::now();
        let o = model_based(env.solver, ctx, &normalized)?;
        cell.timings.model_based = Some(t.elapsed());
        cell.model_based = Some(o.scores);
        model_outcome = Some(o);
    }
    let mut suite_outcome = None;
    if env.metrics.contains(&Metric::TestSuite) {
        let t = Instant::now();
        let s = run_suite(env.solver, &normalized, &bundle.suite, ctx.timeout)?;
        cell.timings.test_suite = Some(t.elapsed());
        cell.suite_accuracy = Some(s.accuracy);
        suite_outcome = Some(s);
    }
    art.json(
        "evaluation.json",
        &Evaluation {
            model_based: model_outcome.as_ref().map(ModelBasedRecord::new),
            test_suite: suite_outcome.as_ref(),
        },
    )?;

    let timed_out = model_outcome
        .as_ref()
        .is_some_and(|o| o.failures.iter().any(|f| f.status == SolveStatus::Timeout))
        || suite_outcome.as_ref().is_some_and(|s| {
            s.cases
                .iter()
                .any(|c| matches!(&c.outcome, CaseOutcome::Errored(e) if e.starts_with("Timeout")))
        });
    let partial = model_outcome.as_ref().is_some_and(|o| o.partial);
    if timed_out {
        cell.failure_tag = Some(FailureTag::Timeout);
    } else if partial {
        cell.failure_tag = Some(FailureTag::Partial);
    }
    if let Some(o) = model_outcome.as_ref().filter(|o| o.partial) {
        let ids: Vec<&str> = o.failures.iter().map(|f| f.instance.as_str()).collect();
        cell.detail = format!("instances without verdict: {}", ids.join(", "));
    }
    debug!(problem = %cell.problem, variant = %cell.variant, run = cell.run_index, "cell done");
    Ok(())
}

/// Model-based scoring against the cached gold models.
fn model_based(solver: &Solver, ctx: &ProblemContext, candidate: &Program) -> Result<ModelEvalOutcome, EvalError> {
    let cfg = EvalConfig {
        timeout: ctx.timeout,
        ..EvalConfig::default()
    };
    let mut sets = ModelSets::default();
    let mut failures = Vec::new();
    for (inst, gold) in ctx.bundle.instances.iter().zip(&ctx.gold) {
        match evaluate_instance(solver, candidate, inst, gold, ctx.bundle.output_preds(), &cfg)? {
            Ok(s) => sets.merge(s),
            Err(f) => failures.push(f),
        }
    }
    Ok(ModelEvalOutcome {
        scores: compute_scores(&sets),
        partial: !failures.is_empty(),
        failures,
        sets,
    })
}

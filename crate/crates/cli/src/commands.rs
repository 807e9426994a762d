use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use aspbench_core::dataset::{default_root, list_problems, load_bundle, ProblemBundle};
use aspbench_core::model_eval::{evaluate_model_based, EvalConfig, ModelEvalOutcome};
use aspbench_core::mutation::{generate_mutants, validate_suite, ValidationInput, ValidationReport};
use aspbench_core::solver::{Solver, SyntaxCheck};
use aspbench_core::suite::{run_suite, SuiteResult};
use aspbench_core::syntax::{parse_program, PredicateMapping};
use aspbench_harness::fixtures::{record_fixtures as record, FIXTURE_MODEL};
use aspbench_harness::stats::ALL;
use aspbench_harness::{parse_list, run_pipeline, Endpoints, Metric, PipelineEnv, RunConfig, ScoreKind, Variant};
use aspbench_llm::{EndpointKind, LlmEndpoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exit::{Class, CliError};
use crate::{Cli, EvaluateArgs, FixturesArgs, MetricChoice, Mode, PipelineArgs, ValidateArgs};

/// Exit code after Ctrl-C, once the partial report is written.
const INTERRUPTED: u8 = 130;

fn metrics_of(choice: MetricChoice) -> BTreeSet<Metric> {
    match choice {
        MetricChoice::ModelBased => [Metric::ModelBased].into(),
        MetricChoice::TestSuite => [Metric::TestSuite].into(),
        MetricChoice::Both => Metric::ALL.into(),
    }
}

fn solver(path: Option<&Path>) -> Result<Solver, CliError> {
    Ok(match path {
        Some(p) => Solver::new(p)?,
        None => Solver::from_env()?,
    })
}

fn bundle(root: &Path, name: &str) -> Result<ProblemBundle, CliError> {
    let dir = root.join(name);
    if !dir.join("manifest.toml").is_file() {
        return Err(CliError::new(
            Class::Dataset,
            format!("no problem `{name}` under {}", root.display()),
        ));
    }
    Ok(load_bundle(&dir)?)
}

fn bundles(root: &Path, names: &[String]) -> Result<Vec<ProblemBundle>, CliError> {
    let names = if names.is_empty() {
        list_problems(root)?
    } else {
        names.to_vec()
    };
    names.iter().map(|n| bundle(root, n)).collect()
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    problem: String,
    candidate: String,
    syntactic_ok: bool,
    syntax_error: Option<String>,
    model_based: Option<ModelEvalOutcome>,
    test_suite: Option<SuiteResult>,
}

pub fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<ExitCode, CliError> {
    let source = fs::read_to_string(&args.candidate)
        .map_err(|e| CliError::usage(format!("cannot read candidate {}: {e}", args.candidate.display())))?;
    let mapping = match &args.mapping {
        Some(p) => {
            let reply = fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read mapping {}: {e}", p.display())))?;
            Some(PredicateMapping::parse_reply(&reply).map_err(CliError::usage)?)
        }
        None => None,
    };
    let root = cli.dataset.clone().unwrap_or_else(default_root);
    let b = bundle(&root, &args.problem)?;
    let solver = solver(cli.solver.as_deref())?;
    let timeout = args.timeout.map(Duration::from_secs).unwrap_or_else(|| b.timeout());
    let metrics = metrics_of(args.metric);

    let mut report = EvaluationReport {
        problem: b.name().to_string(),
        candidate: args.candidate.display().to_string(),
        syntactic_ok: false,
        syntax_error: None,
        model_based: None,
        test_suite: None,
    };
    let candidate = match parse_program(&source) {
        Ok(p) => match solver.check_program(&p, timeout)? {
            SyntaxCheck::Ok => Some(p),
            SyntaxCheck::SyntaxError(e) => {
                report.syntax_error = Some(e);
                None
            }
            SyntaxCheck::Timeout => {
                report.syntax_error = Some("grounding timed out".into());
                None
            }
        },
        Err(e) => {
            report.syntax_error = Some(e.to_string());
            None
        }
    };
    println!("problem: {}", b.name());
    if let Some(p) = candidate {
        report.syntactic_ok = true;
        let p = match &mapping {
            Some(m) => p.rename_predicates(m).map_err(CliError::usage)?,
            None => p,
        };
        let normalized = p.strip_input_facts(b.input_preds());
        println!("syntactic: ok");
        if metrics.contains(&Metric::ModelBased) {
            let cfg = EvalConfig {
                timeout,
                ..EvalConfig::default()
            };
            let o = evaluate_model_based(&solver, &normalized, &b.gold, &b.instances, b.output_preds(), &cfg)?;
            let s = &o.scores;
            println!(
                "model-based: precision {:.6} recall {:.6} f1 {:.6} (gold {}, covered {}, wrong {}){}",
                s.precision,
                s.recall,
                s.f1,
                s.gm_count,
                s.cgm_count,
                s.wm_count,
                if o.partial { " partial" } else { "" }
            );
            report.model_based = Some(o);
        }
        if metrics.contains(&Metric::TestSuite) {
            let r = run_suite(&solver, &normalized, &b.suite, timeout)?;
            println!(
                "test-suite: accuracy {:.6} ({}/{} cases)",
                r.accuracy, r.passed, r.total
            );
            for c in r.cases.iter().filter(|c| !c.outcome.passed()) {
                println!("  failed {}: {:?}", c.name, c.outcome);
            }
            report.test_suite = Some(r);
        }
    } else {
        println!("syntactic: error");
        println!("{}", report.syntax_error.as_deref().unwrap_or_default());
    }
    let path = write_json(&args.out, &format!("evaluation-{}.json", b.name()), &report)?;
    println!("report: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointsFile {
    generator: Option<LlmEndpoint>,
    matcher: Option<LlmEndpoint>,
    paraphraser: Option<LlmEndpoint>,
}

/// Settings file of the `pipeline` command; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineFile {
    dataset: Option<PathBuf>,
    solver: Option<PathBuf>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    timeout: Option<u64>,
    runs: Option<u32>,
    variants: Option<Vec<String>>,
    problems: Option<Vec<String>>,
    metrics: Option<Vec<String>>,
    mode: Option<Mode>,
    seed: Option<u64>,
    fixtures: Option<PathBuf>,
    cache: Option<PathBuf>,
    #[serde(default)]
    endpoints: EndpointsFile,
}

fn endpoints(args: &PipelineArgs, file: &PipelineFile, mode: Mode) -> Result<Endpoints, CliError> {
    let f = &file.endpoints;
    match mode {
        Mode::Replay => {
            let dir = args
                .fixtures
                .clone()
                .or_else(|| file.fixtures.clone())
                .unwrap_or_else(|| PathBuf::from("fixtures/replay"));
            if !dir.is_dir() {
                return Err(CliError::new(
                    Class::Endpoint,
                    format!("replay fixtures directory {} does not exist", dir.display()),
                ));
            }
            let model = args
                .model
                .clone()
                .or_else(|| f.generator.as_ref().map(|e| e.model_name.clone()))
                .unwrap_or_else(|| FIXTURE_MODEL.to_string());
            let matcher = args
                .matcher_model
                .clone()
                .or_else(|| f.matcher.as_ref().map(|e| e.model_name.clone()))
                .unwrap_or_else(|| model.clone());
            let dir = dir.display().to_string();
            Ok(Endpoints {
                generator: LlmEndpoint::replay(dir.clone(), model),
                matcher: LlmEndpoint::replay(dir, matcher),
                paraphraser: None,
            })
        }
        Mode::Live => {
            let mut generator = match (&f.generator, &args.base_url, &args.model) {
                (Some(e), _, _) => e.clone(),
                (None, Some(url), Some(model)) => LlmEndpoint::live(url.clone(), model.clone(), None),
                _ => {
                    return Err(CliError::usage(
                        "live mode needs --base-url and --model, or [endpoints.generator] in the config file",
                    ))
                }
            };
            generator.kind = EndpointKind::Live;
            if let Some(url) = &args.base_url {
                generator.base_url = url.clone();
            }
            if let Some(model) = &args.model {
                generator.model_name = model.clone();
            }
            if let Some(var) = &args.api_key_env {
                generator.api_key_env = Some(var.clone());
            }
            let mut matcher = f.matcher.clone().unwrap_or_else(|| generator.clone());
            if let Some(model) = &args.matcher_model {
                matcher.model_name = model.clone();
            }
            Ok(Endpoints {
                generator,
                matcher,
                paraphraser: f.paraphraser.clone(),
            })
        }
    }
}

pub fn pipeline(cli: &Cli, args: &PipelineArgs) -> Result<ExitCode, CliError> {
    let file: PipelineFile = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))?
        }
        None => PipelineFile::default(),
    };
    let mode = args.mode.or(file.mode).unwrap_or(Mode::Replay);
    let mut cfg = RunConfig::new(endpoints(args, &file, mode)?);
    if let Some(v) = args.variants.as_deref() {
        cfg.variants = parse_list(v).map_err(CliError::usage)?;
    } else if let Some(v) = &file.variants {
        cfg.variants = parse_list(&v.join(",")).map_err(CliError::usage)?;
    }
    if let Some(p) = args.problems.as_deref() {
        cfg.problems = parse_list(p).map_err(|e: std::convert::Infallible| CliError::usage(e))?;
    } else if let Some(p) = &file.problems {
        cfg.problems = p.clone();
    }
    if let Some(m) = args.metric {
        cfg.metrics = metrics_of(m);
    } else if let Some(m) = &file.metrics {
        cfg.metrics = parse_list::<Metric>(&m.join(","))
            .map_err(CliError::usage)?
            .into_iter()
            .collect();
    }
    cfg.runs_per_cell = args.runs.or(file.runs).unwrap_or(cfg.runs_per_cell);
    cfg.workers = args.workers.or(file.workers).unwrap_or(cfg.workers);
    cfg.timeout_secs = args.timeout.or(file.timeout);
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.validate().map_err(CliError::usage)?;

    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let dataset = cli
        .dataset
        .clone()
        .or_else(|| file.dataset.clone())
        .unwrap_or_else(default_root);
    let solver = solver(cli.solver.as_deref().or(file.solver.as_deref()))?;
    let cache = args
        .cache
        .clone()
        .or_else(|| file.cache.clone())
        .unwrap_or_else(|| out.join("cache"));
    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = Arc::clone(&cancel);
        let handler = ctrlc::set_handler(move || {
            eprintln!("interrupted: finishing running cells, then writing a partial report");
            cancel.store(true, Ordering::Relaxed);
        });
        if let Err(e) = handler {
            tracing::warn!("cannot install the Ctrl-C handler: {e}");
        }
    }
    let env = PipelineEnv {
        dataset,
        solver,
        out: out.clone(),
        cache_dir: Some(cache),
        cancel,
    };
    let outcome = run_pipeline(&cfg, &env)?;

    let dropped = outcome.cells.len() - outcome.completed();
    println!(
        "cells: {} completed, {} dropped, {} cancelled",
        outcome.completed(),
        dropped,
        outcome.cancelled
    );
    for kind in ScoreKind::ALL {
        for v in std::iter::once(ALL).chain(cfg.variants.iter().map(|v| v.as_str())) {
            if let Some(r) = outcome.aggregates.get(ALL, v, kind).filter(|r| r.n > 0) {
                println!("{kind:<12} {v:<12} {:.4} ± {:.4} (n={})", r.mean, r.half_width, r.n);
            }
        }
    }
    match &outcome.correlation {
        Ok(rho) => println!("pearson(model_based, test_suite) = {rho:.4}"),
        Err(e) => println!("pearson(model_based, test_suite): {e}"),
    }
    println!("reports: {}", out.display());

    if outcome.cancelled > 0 {
        return Ok(ExitCode::from(INTERRUPTED));
    }
    if !outcome.cells.is_empty() && outcome.completed() == 0 {
        let class = if outcome.cells.iter().any(|c| c.detail.starts_with("endpoint")) {
            Class::Endpoint
        } else if outcome.cells.iter().any(|c| c.detail.starts_with("solver")) {
            Class::Solver
        } else {
            Class::Failure
        };
        let first = &outcome.cells[0].detail;
        return Err(CliError::new(
            class,
            format!("no cell completed; first failure: {first}"),
        ));
    }
    Ok(ExitCode::SUCCESS)
}

fn validate_one(solver: &Solver, b: &ProblemBundle, args: &ValidateArgs) -> Result<ValidationReport, CliError> {
    let timeout = args.timeout.map(Duration::from_secs).unwrap_or_else(|| b.timeout());
    let count = args.mutants.unwrap_or(b.manifest.mutation.count);
    let seed = args.seed.unwrap_or(b.manifest.mutation.seed);
    let mutants = generate_mutants(solver, &b.gold, count, seed, timeout)?;
    let adjudicated = b.manifest.adjudicated_hashes();
    let input = ValidationInput {
        gold: &b.gold,
        suite: &b.suite,
        instances: &b.instances,
        outputs: b.output_preds(),
        adjudicated: &adjudicated,
        eval: EvalConfig {
            timeout,
            ..EvalConfig::default()
        },
    };
    Ok(validate_suite(solver, &input, &mutants)?)
}

pub fn validate(cli: &Cli, args: &ValidateArgs) -> Result<ExitCode, CliError> {
    if args.workers == 0 {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let root = cli.dataset.clone().unwrap_or_else(default_root);
    let bundles = bundles(&root, &args.problem)?;
    let solver = solver(cli.solver.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::new(Class::Failure, e))?;
    let reports: Vec<Result<ValidationReport, CliError>> =
        pool.install(|| bundles.par_iter().map(|b| validate_one(&solver, b, args)).collect());

    let mut survivors = 0;
    for (b, report) in bundles.iter().zip(reports) {
        let report = report.map_err(|e| CliError::new(e.class, format!("{}: {e}", b.name())))?;
        let open: Vec<_> = report.unadjudicated_survivors().collect();
        let adjudicated = report.survivors().count() - open.len();
        println!(
            "{}: {} mutants, {} survivors, {} adjudicated equivalent",
            b.name(),
            report.mutants.len(),
            open.len(),
            adjudicated
        );
        for m in &open {
            println!(
                "  survivor #{} {}: {} (model F1 {})",
                m.id,
                m.lineage.kind,
                m.lineage.detail,
                m.model_f1.map(|f| format!("{f:.4}")).unwrap_or_else(|| "n/a".into())
            );
            println!("    source hash {}", m.source_hash);
        }
        survivors += open.len();
        write_json(&args.out, &format!("validation-{}.json", b.name()), &report)?;
    }
    Ok(if survivors > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

pub fn record_fixtures(cli: &Cli, args: &FixturesArgs) -> Result<ExitCode, CliError> {
    if args.runs == 0 {
        return Err(CliError::usage("--runs must be at least 1"));
    }
    let root = cli.dataset.clone().unwrap_or_else(default_root);
    let names = match &args.problems {
        Some(p) => parse_list(p).map_err(|e: std::convert::Infallible| CliError::usage(e))?,
        None => Vec::new(),
    };
    let bundles = bundles(&root, &names)?;
    let solver = solver(cli.solver.as_deref())?;
    let dir = args.out.display().to_string();
    let endpoint = LlmEndpoint::replay(dir, args.model.clone());
    let n = record(
        &bundles,
        &Variant::ALL,
        args.runs,
        &endpoint,
        &endpoint,
        &solver,
        &args.out,
    )
    .map_err(|e| CliError::new(Class::Dataset, e))?;
    println!("{n} fixtures written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

//! Subprocess bridge to an external clingo-compatible solver.
//!
//! Programs are piped through stdin and results are read from the solver's
//! JSON output (`--outf=2`). Every call is an isolated process with its own
//! timeout, so a `Solver` can be shared freely between worker threads.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::syntax::{GroundAtom, PredicateSignature, Program};

/// Environment variable naming the solver binary.
pub const SOLVER_ENV: &str = "ASPBENCH_SOLVER";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver binary not found (set {SOLVER_ENV} or put `clingo` on PATH): {0}")]
    Unavailable(String),
    #[error("solver I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

/// An answer set with the optimization costs reported for it (highest
/// priority first; empty without weak constraints).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AnswerSet {
    pub atoms: BTreeSet<GroundAtom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub costs: Vec<i64>,
}

impl AnswerSet {
    pub fn new(atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        Self {
            atoms: atoms.into_iter().collect(),
            costs: Vec::new(),
        }
    }

    pub fn projected(&self, preds: &BTreeSet<PredicateSignature>) -> AnswerSet {
        AnswerSet {
            atoms: crate::syntax::project_atoms(&self.atoms, preds),
            costs: self.costs.clone(),
        }
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    /// The atoms rendered as facts, one per line.
    pub fn to_facts(&self) -> String {
        self.atoms.iter().map(|a| format!("{a}.\n")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    CheckSyntax,
    OneModel,
    AllModels,
    AllOptimalModels,
}

/// How weak constraints are treated when enumerating.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Optimization {
    /// Optimal models when the program has weak constraints.
    #[default]
    Auto,
    /// Every stable model; weak constraints ignored.
    Ignore,
    /// Every model whose cost vector is lexicographically at most the bound.
    Bounded(Vec<i64>),
}

#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub program_parts: Vec<Program>,
    pub mode: SolveMode,
    pub timeout: Duration,
    pub project: Option<BTreeSet<PredicateSignature>>,
    pub optimization: Optimization,
}

impl SolveRequest {
    pub fn new(parts: &[&Program], mode: SolveMode) -> Self {
        Self {
            program_parts: parts.iter().map(|p| (*p).clone()).collect(),
            mode,
            timeout: DEFAULT_TIMEOUT,
            project: None,
            optimization: Optimization::Auto,
        }
    }

    pub fn timeout(mut self, t: Duration) -> Self {
        self.timeout = t;
        self
    }

    pub fn project(mut self, preds: &BTreeSet<PredicateSignature>) -> Self {
        self.project = Some(preds.clone());
        self
    }

    pub fn optimization(mut self, o: Optimization) -> Self {
        self.optimization = o;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Sat,
    Unsat,
    SyntaxError,
    Timeout,
    SolverCrash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Sorted by atoms; duplicates removed.
    pub models: Vec<AnswerSet>,
    pub optimum_proven: bool,
    /// Optimum cost vector when the program optimizes.
    pub costs: Option<Vec<i64>>,
    pub stderr_excerpt: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl SolveResult {
    fn failed(status: SolveStatus, stderr: String, elapsed: Duration) -> Self {
        Self {
            status,
            models: Vec::new(),
            optimum_proven: false,
            costs: None,
            stderr_excerpt: excerpt(&stderr),
            elapsed,
        }
    }

    pub fn is_sat(&self) -> bool {
        self.status == SolveStatus::Sat
    }

    pub fn is_unsat(&self) -> bool {
        self.status == SolveStatus::Unsat
    }

    /// True for `Sat` and `Unsat`; the other statuses mean no verdict.
    pub fn completed(&self) -> bool {
        matches!(self.status, SolveStatus::Sat | SolveStatus::Unsat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyntaxCheck {
    Ok,
    SyntaxError(String),
    Timeout,
}

#[derive(Debug, Clone)]
pub struct Solver {
    binary: PathBuf,
}

impl Solver {
    pub fn new(binary: impl Into<PathBuf>) -> Result<Self, SolverError> {
        let binary = binary.into();
        let resolved = resolve_binary(&binary).ok_or_else(|| SolverError::Unavailable(binary.display().to_string()))?;
        Ok(Self { binary: resolved })
    }

    /// `$ASPBENCH_SOLVER`, falling back to `clingo` on `PATH`.
    pub fn from_env() -> Result<Self, SolverError> {
        match std::env::var_os(SOLVER_ENV) {
            Some(p) if !p.is_empty() => Self::new(PathBuf::from(p)),
            _ => Self::new("clingo"),
        }
    }

    pub fn binary(&self) -> &Path {
        &self.binary
    }

    /// Grounds `source` and reports parse or grounding errors verbatim.
    pub fn check_syntax(&self, source: &str, timeout: Duration) -> Result<SyntaxCheck, SolverError> {
        let args = vec!["--mode=gringo".to_string(), "--text".to_string()];
        let out = self.run(&args, source, timeout)?;
        Ok(match out {
            RawOutput::TimedOut { .. } => SyntaxCheck::Timeout,
            RawOutput::Exited { code, stderr, .. } => {
                if code == Some(0) && !stderr.contains("error:") {
                    SyntaxCheck::Ok
                } else {
                    SyntaxCheck::SyntaxError(stderr.trim().to_string())
                }
            }
        })
    }

    pub fn check_program(&self, p: &Program, timeout: Duration) -> Result<SyntaxCheck, SolverError> {
        self.check_syntax(&p.to_source(), timeout)
    }

    /// All stable models, or all optimal ones when the parts optimize.
    pub fn solve_all(&self, parts: &[&Program], timeout: Duration) -> Result<SolveResult, SolverError> {
        self.solve(&SolveRequest::new(parts, SolveMode::AllModels).timeout(timeout))
    }

    /// At most one model; optimal when the parts optimize.
    pub fn solve_once(&self, parts: &[&Program], timeout: Duration) -> Result<SolveResult, SolverError> {
        self.solve(&SolveRequest::new(parts, SolveMode::OneModel).timeout(timeout))
    }

    pub fn solve(&self, req: &SolveRequest) -> Result<SolveResult, SolverError> {
        let mut source = String::new();
        for p in &req.program_parts {
            source.push_str(&p.to_source());
        }
        if req.mode == SolveMode::CheckSyntax {
            let started = Instant::now();
            let check = self.check_syntax(&source, req.timeout)?;
            let elapsed = started.elapsed();
            return Ok(match check {
                SyntaxCheck::Ok => SolveResult {
                    status: SolveStatus::Sat,
                    models: Vec::new(),
                    optimum_proven: false,
                    costs: None,
                    stderr_excerpt: String::new(),
                    elapsed,
                },
                SyntaxCheck::SyntaxError(e) => SolveResult::failed(SolveStatus::SyntaxError, e, elapsed),
                SyntaxCheck::Timeout => SolveResult::failed(SolveStatus::Timeout, String::new(), elapsed),
            });
        }
        if let Some(preds) = &req.project {
            if preds.is_empty() {
                source.push_str("#show.\n");
            }
            for p in preds {
                source.push_str(&format!("#show {}/{}.\n", p.name, p.arity));
            }
        }
        let optimizes = req.program_parts.iter().any(|p| p.has_weak_constraints());

        let mut args = vec!["--outf=2".to_string(), "--models=0".to_string()];
        if req.project.is_some() {
            args.push("--project=show".into());
        }
        match (&req.optimization, req.mode) {
            (Optimization::Ignore, _) => args.push("--opt-mode=ignore".into()),
            (Optimization::Bounded(bound), _) if optimizes => {
                let b: Vec<String> = bound.iter().map(|c| c.to_string()).collect();
                if b.is_empty() {
                    args.push("--opt-mode=enum".into());
                } else {
                    args.push(format!("--opt-mode=enum,{}", b.join(",")));
                }
            }
            (_, SolveMode::OneModel) if optimizes => args.push("--opt-mode=opt".into()),
            (_, SolveMode::OneModel) => args[1] = "--models=1".into(),
            (_, _) if optimizes => args.push("--opt-mode=optN".into()),
            _ => {}
        }
        let secs = req.timeout.as_secs().max(1);
        args.push(format!("--time-limit={secs}"));

        let raw = self.run(&args, &source, req.timeout + Duration::from_secs(2))?;
        let (code, stdout, stderr, elapsed) = match raw {
            RawOutput::TimedOut { stderr, elapsed } => {
                return Ok(SolveResult::failed(SolveStatus::Timeout, stderr, elapsed))
            }
            RawOutput::Exited {
                code,
                stdout,
                stderr,
                elapsed,
            } => (code, stdout, stderr, elapsed),
        };
        if code == Some(65) || stderr.contains("error:") {
            return Ok(SolveResult::failed(SolveStatus::SyntaxError, stderr, elapsed));
        }
        let parsed: ClingoJson = match serde_json::from_str(&stdout) {
            Ok(j) => j,
            Err(e) => {
                return Ok(SolveResult::failed(
                    SolveStatus::SolverCrash,
                    format!("unreadable solver output ({e}); exit {code:?}; {stderr}"),
                    elapsed,
                ))
            }
        };
        let mut result = interpret(parsed, req, optimizes, &stderr)
            .unwrap_or_else(|msg| SolveResult::failed(SolveStatus::SolverCrash, format!("{msg}; {stderr}"), elapsed));
        result.elapsed = elapsed;
        Ok(result)
    }

    fn run(&self, args: &[String], stdin: &str, timeout: Duration) -> Result<RawOutput, SolverError> {
        let started = Instant::now();
        let mut child = Command::new(&self.binary)
            .args(args)
            .arg("-")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let mut stdin_pipe = child.stdin.take().expect("piped stdin");
        let input = stdin.to_string();
        let writer = std::thread::spawn(move || {
            // The solver may exit early on errors; a broken pipe is fine.
            let _ = stdin_pipe.write_all(input.as_bytes());
        });
        let mut out_pipe = child.stdout.take().expect("piped stdout");
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = out_pipe.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = err_pipe.read_to_string(&mut s);
            s
        });
        let status = child.wait_timeout(timeout)?;
        let timed_out = status.is_none();
        if timed_out {
            let _ = child.kill();
            let _ = child.wait();
        }
        let _ = writer.join();
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        let elapsed = started.elapsed();
        if timed_out {
            return Ok(RawOutput::TimedOut { stderr, elapsed });
        }
        Ok(RawOutput::Exited {
            code: status.and_then(|s| s.code()),
            stdout,
            stderr,
            elapsed,
        })
    }
}

fn resolve_binary(p: &Path) -> Option<PathBuf> {
    if p.components().count() > 1 {
        return p.is_file().then(|| p.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(p)).find(|c| c.is_file())
}

enum RawOutput {
    Exited {
        code: Option<i32>,
        stdout: String,
        stderr: String,
        elapsed: Duration,
    },
    TimedOut {
        stderr: String,
        elapsed: Duration,
    },
}

fn excerpt(s: &str) -> String {
    const MAX: usize = 2000;
    let s = s.trim();
    if s.len() <= MAX {
        return s.to_string();
    }
    let mut cut = MAX;
    while !s.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}...", &s[..cut])
}

#[derive(Debug, Deserialize)]
struct ClingoJson {
    #[serde(rename = "Result")]
    result: String,
    #[serde(rename = "Call", default)]
    call: Vec<ClingoCall>,
    #[serde(rename = "Models", default)]
    models: Option<ClingoModels>,
    #[serde(rename = "TIME LIMIT", default)]
    time_limit: Option<serde_json::Value>,
    #[serde(rename = "INTERRUPTED", default)]
    interrupted: Option<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
struct ClingoCall {
    #[serde(rename = "Witnesses", default)]
    witnesses: Vec<ClingoWitness>,
}

#[derive(Debug, Deserialize)]
struct ClingoWitness {
    #[serde(rename = "Value", default)]
    value: Vec<String>,
    #[serde(rename = "Costs", default)]
    costs: Vec<i64>,
}

#[derive(Debug, Deserialize)]
struct ClingoModels {
    #[serde(rename = "More", default)]
    more: Option<String>,
    #[serde(rename = "Optimum", default)]
    optimum: Option<String>,
    #[serde(rename = "Costs", default)]
    costs: Option<Vec<i64>>,
}

fn interpret(json: ClingoJson, req: &SolveRequest, optimizes: bool, stderr: &str) -> Result<SolveResult, String> {
    let more = json
        .models
        .as_ref()
        .and_then(|m| m.more.as_deref())
        .is_some_and(|m| m == "yes");
    let interrupted =
        json.time_limit.is_some() || json.interrupted.is_some() || (more && req.mode != SolveMode::OneModel);
    let mut witnesses = Vec::new();
    for call in json.call {
        for w in call.witnesses {
            let mut atoms = BTreeSet::new();
            for v in &w.value {
                atoms.insert(v.parse::<GroundAtom>().map_err(|e| e.to_string())?);
            }
            witnesses.push(AnswerSet { atoms, costs: w.costs });
        }
    }
    let final_costs = json.models.as_ref().and_then(|m| m.costs.clone());
    let optimum_proven = json
        .models
        .as_ref()
        .and_then(|m| m.optimum.as_deref())
        .is_some_and(|o| o == "yes");

    let status = match json.result.as_str() {
        "UNSATISFIABLE" => SolveStatus::Unsat,
        "SATISFIABLE" | "OPTIMUM FOUND" => SolveStatus::Sat,
        "UNKNOWN" => {
            return Ok(SolveResult::failed(
                SolveStatus::Timeout,
                stderr.to_string(),
                Duration::ZERO,
            ));
        }
        other => return Err(format!("unexpected result `{other}`")),
    };
    if interrupted {
        return Ok(SolveResult::failed(
            SolveStatus::Timeout,
            stderr.to_string(),
            Duration::ZERO,
        ));
    }
    let use_opt =
        optimizes && matches!(req.optimization, Optimization::Auto) && witnesses.iter().any(|w| !w.costs.is_empty());
    // Weak constraints that ground to nothing: every model is optimal.
    let vacuous = optimizes && matches!(req.optimization, Optimization::Auto) && !use_opt && !witnesses.is_empty();
    let mut models = match req.mode {
        SolveMode::OneModel if use_opt => witnesses.pop().into_iter().collect(),
        SolveMode::OneModel => witnesses.into_iter().take(1).collect(),
        _ if use_opt => {
            // optN reports improving models before the optimal ones.
            let best = final_costs.clone().unwrap_or_default();
            witnesses.into_iter().filter(|w| w.costs == best).collect()
        }
        _ => witnesses,
    };
    if !optimizes || matches!(req.optimization, Optimization::Ignore) {
        for m in &mut models {
            m.costs.clear();
        }
    }
    models.sort();
    models.dedup_by(|a, b| a.atoms == b.atoms);
    if status == SolveStatus::Sat && models.is_empty() {
        return Err("satisfiable result without witnesses".into());
    }
    Ok(SolveResult {
        status,
        models,
        optimum_proven: (use_opt && optimum_proven) || vacuous,
        costs: if use_opt {
            final_costs
        } else if vacuous {
            Some(Vec::new())
        } else {
            None
        },
        stderr_excerpt: excerpt(stderr),
        elapsed: Duration::ZERO,
    })
}

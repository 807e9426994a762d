//! Annotation-based unit tests for logic programs.
//!
//! A suite is an `.lp` file in which `%@` comment lines carry annotations.
//! `%@test(name=...)` opens a case; the facts up to the next `%@test` form
//! the case's scenario and the other annotations are its assertions:
//!
//! ```text
//! %@test(name=k4)
//! node(1..4). edge(1,2). edge(1,3). edge(1,4). edge(2,3). edge(2,4). edge(3,4).
//! color(red;green;blue).
//! %@noAnswerSet
//!
//! %@test(name=triangle)
//! node(1..3). edge(1,2). edge(2,3). edge(1,3). color(red;green;blue).
//! %@answerSetCount(count=6)
//! %@constraintForAll(constraint=":- node(U), not chosenColor(U,_).")
//! %@trueInAtLeastOne(atom="chosenColor(1,red)")
//! ```
//!
//! An annotation whose parentheses are still open at the end of a line
//! continues on the following `%` lines. Plain `%` lines are comments.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{AnswerSet, SolveMode, SolveRequest, SolveResult, SolveStatus, Solver, SolverError};
use crate::syntax::{is_identifier, parse_program, project_atoms, GroundAtom, PredicateSignature, Program, RuleKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SuiteError {
    #[error("suite syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown assertion `{name}` at line {line}")]
    UnknownAssertionKind { line: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assertion {
    NoAnswerSet,
    HasAnswerSet,
    AnswerSetCount { count: usize },
    ConstraintForAll { constraint: String },
    TrueInAll { atom: GroundAtom },
    TrueInAtLeastOne { atom: GroundAtom },
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::NoAnswerSet => f.write_str("noAnswerSet"),
            Assertion::HasAnswerSet => f.write_str("hasAnswerSet"),
            Assertion::AnswerSetCount { count } => write!(f, "answerSetCount(count={count})"),
            Assertion::ConstraintForAll { constraint } => {
                write!(f, "constraintForAll(constraint={constraint:?})")
            }
            Assertion::TrueInAll { atom } => write!(f, "trueInAll(atom=\"{atom}\")"),
            Assertion::TrueInAtLeastOne { atom } => write!(f, "trueInAtLeastOne(atom=\"{atom}\")"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub name: String,
    pub facts: Program,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
    /// Predicates that models are compared on for counting and atom
    /// assertions; full models are used when empty.
    pub outputs: BTreeSet<PredicateSignature>,
}

impl TestSuite {
    pub fn with_outputs(mut self, outputs: &BTreeSet<PredicateSignature>) -> Self {
        self.outputs = outputs.clone();
        self
    }

    pub fn case_names(&self) -> impl Iterator<Item = &str> {
        self.cases.iter().map(|c| c.name.as_str())
    }
}

pub fn parse_suite(source: &str) -> Result<TestSuite, SuiteError> {
    let mut cases: Vec<(usize, TestCase, String)> = Vec::new();
    let lines: Vec<&str> = source.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let line = lines[i].trim();
        i += 1;
        let Some(mut ann) = line.strip_prefix("%@").map(|s| s.trim().to_string()) else {
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            match cases.last_mut() {
                Some((_, _, facts)) => {
                    facts.push_str(lines[i - 1]);
                    facts.push('\n');
                }
                None => return Err(syntax(line_no, "facts before the first %@test")),
            }
            continue;
        };
        while !balanced(&ann) {
            let Some(next) = lines.get(i).map(|l| l.trim()) else {
                return Err(syntax(line_no, "unterminated annotation"));
            };
            let Some(rest) = next.strip_prefix('%') else {
                return Err(syntax(line_no, "unterminated annotation"));
            };
            ann.push(' ');
            ann.push_str(rest.trim_start_matches('@').trim());
            i += 1;
        }
        let (name, args) = split_annotation(&ann, line_no)?;
        if name == "test" {
            let case_name = single_arg(&args, "name", line_no)?;
            if !is_identifier(&case_name) && !case_name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(syntax(line_no, &format!("invalid test name `{case_name}`")));
            }
            if cases.iter().any(|(_, c, _)| c.name == case_name) {
                return Err(syntax(line_no, &format!("duplicate test name `{case_name}`")));
            }
            cases.push((
                line_no,
                TestCase {
                    name: case_name,
                    facts: Program::empty(),
                    assertions: Vec::new(),
                },
                String::new(),
            ));
            continue;
        }
        let assertion = parse_assertion(&name, &args, line_no)?;
        match cases.last_mut() {
            Some((_, case, _)) => case.assertions.push(assertion),
            None => return Err(syntax(line_no, "assertion before the first %@test")),
        }
    }
    if cases.is_empty() {
        return Err(syntax(1, "a suite needs at least one %@test case"));
    }
    let mut out = Vec::with_capacity(cases.len());
    for (line, mut case, facts) in cases {
        if case.assertions.is_empty() {
            return Err(syntax(line, &format!("test `{}` has no assertions", case.name)));
        }
        let program = parse_program(&facts).map_err(|e| syntax(line, &format!("facts of `{}`: {e}", case.name)))?;
        if let Some(r) = program.rules().iter().find(|r| r.kind != RuleKind::Fact) {
            return Err(syntax(
                line,
                &format!("test `{}` contains a non-fact `{}`", case.name, r.text),
            ));
        }
        case.facts = program;
        out.push(case);
    }
    Ok(TestSuite {
        cases: out,
        outputs: BTreeSet::new(),
    })
}

fn syntax(line: usize, message: &str) -> SuiteError {
    SuiteError::Syntax {
        line,
        message: message.to_string(),
    }
}

/// True once every parenthesis outside string literals is closed.
fn balanced(s: &str) -> bool {
    let mut depth = 0i32;
    let mut in_str = false;
    let mut escaped = false;
    for c in s.chars() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
    }
    depth <= 0 && !in_str
}

type Args = Vec<(String, String)>;

fn split_annotation(ann: &str, line: usize) -> Result<(String, Args), SuiteError> {
    let name_end = ann
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(ann.len());
    let name = ann[..name_end].to_string();
    if name.is_empty() {
        return Err(syntax(line, "missing annotation name"));
    }
    let rest = ann[name_end..].trim();
    if rest.is_empty() {
        return Ok((name, Vec::new()));
    }
    let inner = rest
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| syntax(line, "expected `(key=value, ...)` after the annotation name"))?;
    let mut args = Vec::new();
    let mut chars = inner.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let key: String = std::iter::from_fn(|| chars.next_if(|c| c.is_ascii_alphanumeric() || *c == '_')).collect();
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if key.is_empty() || chars.next() != Some('=') {
            return Err(syntax(line, "expected `key=value`"));
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let value = if chars.peek() == Some(&'"') {
            chars.next();
            let mut v = String::new();
            loop {
                match chars.next() {
                    Some('\\') => match chars.next() {
                        Some(c @ ('"' | '\\')) => v.push(c),
                        Some(c) => {
                            v.push('\\');
                            v.push(c);
                        }
                        None => return Err(syntax(line, "unterminated string")),
                    },
                    Some('"') => break,
                    Some(c) => v.push(c),
                    None => return Err(syntax(line, "unterminated string")),
                }
            }
            v
        } else {
            std::iter::from_fn(|| chars.next_if(|c| *c != ','))
                .collect::<String>()
                .trim()
                .to_string()
        };
        args.push((key, value));
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            Some(',') | None => {}
            Some(c) => return Err(syntax(line, &format!("unexpected `{c}` in arguments"))),
        }
    }
    Ok((name, args))
}

fn single_arg(args: &Args, key: &str, line: usize) -> Result<String, SuiteError> {
    match args.as_slice() {
        [(k, v)] if k == key => Ok(v.clone()),
        _ => Err(syntax(line, &format!("expected exactly one argument `{key}=...`"))),
    }
}

fn no_args(args: &Args, line: usize) -> Result<(), SuiteError> {
    if args.is_empty() {
        Ok(())
    } else {
        Err(syntax(line, "this annotation takes no arguments"))
    }
}

fn parse_assertion(name: &str, args: &Args, line: usize) -> Result<Assertion, SuiteError> {
    let atom = |args: &Args| -> Result<GroundAtom, SuiteError> {
        single_arg(args, "atom", line)?
            .parse()
            .map_err(|e| syntax(line, &format!("{e}")))
    };
    Ok(match name {
        "noAnswerSet" => {
            no_args(args, line)?;
            Assertion::NoAnswerSet
        }
        "hasAnswerSet" => {
            no_args(args, line)?;
            Assertion::HasAnswerSet
        }
        "answerSetCount" => {
            let n = single_arg(args, "count", line)?;
            let count = n
                .parse()
                .map_err(|_| syntax(line, &format!("count must be a non-negative integer, got `{n}`")))?;
            Assertion::AnswerSetCount { count }
        }
        "constraintForAll" => {
            let constraint = single_arg(args, "constraint", line)?;
            let p = parse_program(&constraint).map_err(|e| syntax(line, &e.to_string()))?;
            match p.rules() {
                [r] if r.kind == RuleKind::StrongConstraint => {}
                _ => return Err(syntax(line, "constraint must be a single `:- ...` rule")),
            }
            Assertion::ConstraintForAll {
                constraint: p.rules()[0].text.clone(),
            }
        }
        "trueInAll" => Assertion::TrueInAll { atom: atom(args)? },
        "trueInAtLeastOne" => Assertion::TrueInAtLeastOne { atom: atom(args)? },
        other => {
            return Err(SuiteError::UnknownAssertionKind {
                line,
                name: other.to_string(),
            })
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "detail", rename_all = "snake_case")]
pub enum CaseOutcome {
    Passed,
    Failed(Vec<String>),
    /// Timeout, crash or grounding error; counts as failed.
    Errored(String),
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, CaseOutcome::Passed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub name: String,
    #[serde(flatten)]
    pub outcome: CaseOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub accuracy: f64,
    pub passed: usize,
    pub total: usize,
    pub cases: Vec<CaseRecord>,
}

pub fn run_case(
    solver: &Solver,
    candidate: &Program,
    case: &TestCase,
    outputs: &BTreeSet<PredicateSignature>,
    timeout: Duration,
) -> Result<CaseOutcome, SolverError> {
    let candidate = candidate.drop_show_directives();
    let r = solver.solve(&SolveRequest::new(&[&candidate, &case.facts], SolveMode::AllModels).timeout(timeout))?;
    if let Some(e) = errored(&r) {
        return Ok(e);
    }
    let full = r.models;
    let view: Vec<BTreeSet<GroundAtom>> = if outputs.is_empty() {
        full.iter().map(|m| m.atoms.clone()).collect()
    } else {
        full.iter()
            .map(|m| project_atoms(&m.atoms, outputs))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };

    let mut reasons = Vec::new();
    for a in &case.assertions {
        let failure = match a {
            Assertion::NoAnswerSet => {
                (!full.is_empty()).then(|| format!("expected no answer set, found {}", view.len()))
            }
            Assertion::HasAnswerSet => full
                .is_empty()
                .then(|| "expected an answer set, found none".to_string()),
            Assertion::AnswerSetCount { count } => {
                (view.len() != *count).then(|| format!("expected {count} answer sets, found {}", view.len()))
            }
            Assertion::TrueInAll { atom } => view
                .iter()
                .find(|m| !m.contains(atom))
                .map(|m| format!("`{atom}` is false in {{{}}}", render(m))),
            Assertion::TrueInAtLeastOne { atom } => {
                (!view.iter().any(|m| m.contains(atom))).then(|| format!("`{atom}` is false in every answer set"))
            }
            Assertion::ConstraintForAll { constraint } => match first_violation(solver, &full, constraint, timeout)? {
                Ok(None) => None,
                Ok(Some(m)) => Some(format!("`{constraint}` is violated by {{{}}}", render(&m.atoms))),
                Err(e) => return Ok(e),
            },
        };
        if let Some(f) = failure {
            reasons.push(format!("{a}: {f}"));
        }
    }
    Ok(if reasons.is_empty() {
        CaseOutcome::Passed
    } else {
        CaseOutcome::Failed(reasons)
    })
}

fn errored(r: &SolveResult) -> Option<CaseOutcome> {
    match r.status {
        SolveStatus::Sat | SolveStatus::Unsat => None,
        s => Some(CaseOutcome::Errored(format!("{s:?}: {}", r.stderr_excerpt))),
    }
}

fn render(atoms: &BTreeSet<GroundAtom>) -> String {
    atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

/// Models checked per solver call by `first_violation`.
const VIOLATION_CHUNK: usize = 128;

/// Checks `constraint` against every model given as facts, a chunk of models
/// per solver call: a selector picks one model, and selectors missing from
/// the result belong to violating models.
fn first_violation(
    solver: &Solver,
    models: &[AnswerSet],
    constraint: &str,
    timeout: Duration,
) -> Result<Result<Option<AnswerSet>, CaseOutcome>, SolverError> {
    if models.is_empty() {
        return Ok(Ok(None));
    }
    let mut taken: BTreeSet<String> = models
        .iter()
        .flat_map(|m| m.atoms.iter().map(|a| a.predicate.clone()))
        .collect();
    if let Ok(p) = parse_program(constraint) {
        taken.extend(p.predicate_names().into_iter().map(String::from));
    }
    let sel = (0..)
        .map(|i| {
            if i == 0 {
                "caseModel".to_string()
            } else {
                format!("caseModel_{i}")
            }
        })
        .find(|n| !taken.contains(n))
        .expect("unbounded suffix search");
    for (c, chunk) in models.chunks(VIOLATION_CHUNK).enumerate() {
        if let Some(i) = violator_in(solver, chunk, &sel, constraint, timeout)? {
            return Ok(i.map(|i| Some(models[c * VIOLATION_CHUNK + i].clone())));
        }
    }
    Ok(Ok(None))
}

/// Index of the first violating model in `models`, if any.
fn violator_in(
    solver: &Solver,
    models: &[AnswerSet],
    sel: &str,
    constraint: &str,
    timeout: Duration,
) -> Result<Option<Result<usize, CaseOutcome>>, SolverError> {
    let mut src = format!("1 {{ {sel}(1..{}) }} 1.\n", models.len());
    for (i, m) in models.iter().enumerate() {
        for a in &m.atoms {
            src.push_str(&format!("{a} :- {sel}({}).\n", i + 1));
        }
    }
    src.push_str(constraint);
    src.push('\n');
    let program = match parse_program(&src) {
        Ok(p) => p,
        Err(e) => return Ok(Some(Err(CaseOutcome::Errored(e.to_string())))),
    };
    let shown: BTreeSet<PredicateSignature> = [PredicateSignature {
        name: sel.to_string(),
        arity: 1,
    }]
    .into();
    let r = solver.solve(
        &SolveRequest::new(&[&program], SolveMode::AllModels)
            .timeout(timeout)
            .project(&shown),
    )?;
    if let Some(e) = errored(&r) {
        return Ok(Some(Err(e)));
    }
    let ok: BTreeSet<String> = r
        .models
        .iter()
        .flat_map(|m| m.atoms.iter().map(|a| a.to_string()))
        .collect();
    Ok((1..=models.len())
        .find(|i| !ok.contains(&format!("{sel}({i})")))
        .map(|i| Ok(i - 1)))
}

/// Runs every case; accuracy is passed over total.
pub fn run_suite(
    solver: &Solver,
    candidate: &Program,
    suite: &TestSuite,
    timeout: Duration,
) -> Result<SuiteResult, SolverError> {
    let mut cases = Vec::with_capacity(suite.cases.len());
    for case in &suite.cases {
        let outcome = run_case(solver, candidate, case, &suite.outputs, timeout)?;
        cases.push(CaseRecord {
            name: case.name.clone(),
            outcome,
        });
    }
    Ok(summarize(cases))
}

pub fn summarize(cases: Vec<CaseRecord>) -> SuiteResult {
    let passed = cases.iter().filter(|c| c.outcome.passed()).count();
    let total = cases.len();
    SuiteResult {
        accuracy: if total == 0 { 0.0 } else { passed as f64 / total as f64 },
        passed,
        total,
        cases,
    }
}

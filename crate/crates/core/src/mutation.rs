//! Seeded lexical mutation of gold programs and the suite-validation loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_eval::{evaluate_model_based, EvalConfig, EvalError, Instance};
use crate::solver::{Solver, SolverError, SyntaxCheck};
use crate::suite::{run_suite, TestSuite};
use crate::syntax::{parse_program, tokenize, PredicateSignature, Program, RuleKind, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    DeleteRule,
    DeleteBodyLiteral,
    ToggleNegation,
    SwapComparison,
    PerturbConstant,
    SwapVariables,
    ShiftBound,
}

impl MutationKind {
    pub const ALL: [MutationKind; 7] = [
        MutationKind::DeleteRule,
        MutationKind::DeleteBodyLiteral,
        MutationKind::ToggleNegation,
        MutationKind::SwapComparison,
        MutationKind::PerturbConstant,
        MutationKind::SwapVariables,
        MutationKind::ShiftBound,
    ];
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub kind: MutationKind,
    pub rule: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutant {
    pub id: usize,
    pub program: Program,
    pub lineage: Lineage,
}

#[derive(Debug, Error)]
pub enum MutationError {
    #[error("only {possible} distinct valid mutants exist, {requested} requested")]
    ExhaustedMutationSpace { possible: usize, requested: usize },
    #[error("count must be at least 1")]
    ZeroCount,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A single textual edit; `edit = None` deletes the whole rule.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Site {
    kind: MutationKind,
    rule: usize,
    edit: Option<(usize, usize, String)>,
    detail: String,
}

/// Every mutation the operators can apply to `p`, grouped by kind.
fn sites(p: &Program) -> BTreeMap<MutationKind, Vec<Site>> {
    let mut out: BTreeMap<MutationKind, Vec<Site>> = BTreeMap::new();
    let mut push = |s: Site| out.entry(s.kind).or_default().push(s);
    for (ri, rule) in p.rules().iter().enumerate() {
        if matches!(rule.kind, RuleKind::Directive | RuleKind::Comment) || rule.text.starts_with('#') {
            continue;
        }
        let src = rule.text.as_str();
        let Ok(toks) = tokenize(src) else { continue };
        let toks: Vec<Token> = toks.into_iter().filter(|t| t.kind != TokenKind::Comment).collect();
        let text = |t: &Token| t.text(src);

        push(Site {
            kind: MutationKind::DeleteRule,
            rule: ri,
            edit: None,
            detail: format!("deleted `{src}`"),
        });

        let literals = body_literals(src, &toks);
        if literals.len() > 1 {
            for (li, &(s, e)) in literals.iter().enumerate() {
                // Remove the literal with the comma that follows it, or the
                // one before it for the last literal.
                let (cut_s, cut_e) = if li + 1 < literals.len() {
                    (toks[s].start, toks[literals[li + 1].0].start)
                } else {
                    (toks[literals[li - 1].1].end, toks[e].end)
                };
                push(Site {
                    kind: MutationKind::DeleteBodyLiteral,
                    rule: ri,
                    edit: Some((cut_s, cut_e, String::new())),
                    detail: format!("removed `{}`", &src[toks[s].start..toks[e].end]),
                });
            }
        }
        for &(s, e) in &literals {
            let lit = &toks[s..=e];
            let is_atom = |t: &[Token]| {
                t.first()
                    .is_some_and(|f| f.kind == TokenKind::Ident && text(f) != "not")
                    && !t
                        .iter()
                        .any(|x| x.kind == TokenKind::Punct && COMPARISONS.contains(&text(x)))
            };
            if text(&lit[0]) == "not" && lit.len() > 1 && is_atom(&lit[1..]) {
                push(Site {
                    kind: MutationKind::ToggleNegation,
                    rule: ri,
                    edit: Some((lit[0].start, lit[1].start, String::new())),
                    detail: format!("`{}` made positive", &src[lit[0].start..lit[lit.len() - 1].end]),
                });
            } else if is_atom(lit) {
                push(Site {
                    kind: MutationKind::ToggleNegation,
                    rule: ri,
                    edit: Some((lit[0].start, lit[0].start, "not ".into())),
                    detail: format!("`{}` negated", &src[lit[0].start..lit[lit.len() - 1].end]),
                });
            }
        }

        let bounds = bound_tokens(src, &toks);
        for (ti, t) in toks.iter().enumerate() {
            let tx = text(t);
            if t.kind == TokenKind::Punct {
                for &(from, to) in COMPARISON_SWAPS {
                    if tx == from {
                        push(Site {
                            kind: MutationKind::SwapComparison,
                            rule: ri,
                            edit: Some((t.start, t.end, to.into())),
                            detail: format!("`{from}` -> `{to}`"),
                        });
                    }
                }
            }
            if t.kind == TokenKind::Number {
                let Ok(n) = tx.parse::<i64>() else { continue };
                let kind = if bounds.contains(&ti) {
                    MutationKind::ShiftBound
                } else {
                    MutationKind::PerturbConstant
                };
                for m in [n + 1, n - 1] {
                    if m < 0 {
                        continue;
                    }
                    push(Site {
                        kind,
                        rule: ri,
                        edit: Some((t.start, t.end, m.to_string())),
                        detail: format!("`{n}` -> `{m}` at byte {}", t.start),
                    });
                }
            }
        }

        for (name, args) in atom_arguments(src, &toks) {
            for i in 0..args.len() {
                for j in i + 1..args.len() {
                    let (a, b) = (&toks[args[i]], &toks[args[j]]);
                    if text(a) == text(b) || text(a) == "_" || text(b) == "_" {
                        continue;
                    }
                    let mut s = src[a.start..b.end].to_string();
                    let (ta, tb) = (text(a).to_string(), text(b).to_string());
                    s.replace_range(b.start - a.start..b.end - a.start, &ta);
                    s.replace_range(0..a.end - a.start, &tb);
                    push(Site {
                        kind: MutationKind::SwapVariables,
                        rule: ri,
                        edit: Some((a.start, b.end, s)),
                        detail: format!("swapped `{ta}` and `{tb}` in `{name}`"),
                    });
                }
            }
        }
    }
    out
}

const COMPARISONS: &[&str] = &["=", "==", "!=", "<>", "<", "<=", ">", ">="];
const COMPARISON_SWAPS: &[(&str, &str)] = &[
    ("=", "!="),
    ("==", "!="),
    ("!=", "="),
    ("<>", "="),
    ("<", "<="),
    ("<", ">"),
    ("<=", "<"),
    ("<=", ">="),
    (">", ">="),
    (">", "<"),
    (">=", ">"),
    (">=", "<="),
];

/// Token ranges (inclusive) of the depth-0 body literals.
fn body_literals(src: &str, toks: &[Token]) -> Vec<(usize, usize)> {
    let text = |t: &Token| t.text(src);
    let mut depth = 0i32;
    let mut start = None;
    for (i, t) in toks.iter().enumerate() {
        match text(t) {
            "(" | "{" | "[" => depth += 1,
            ")" | "}" | "]" => depth -= 1,
            ":-" | ":~" if depth == 0 => {
                start = Some(i + 1);
                break;
            }
            _ => {}
        }
    }
    let Some(mut s) = start else { return Vec::new() };
    let mut out = Vec::new();
    depth = 0;
    for (i, t) in toks.iter().enumerate().skip(s) {
        let tx = text(t);
        match tx {
            "(" | "{" | "[" => depth += 1,
            ")" | "}" | "]" => depth -= 1,
            "," | "." if depth == 0 => {
                if i > s {
                    out.push((s, i - 1));
                }
                s = i + 1;
                if tx == "." {
                    break;
                }
            }
            _ => {}
        }
    }
    out
}

/// Numbers acting as cardinality bounds: right before `{` or an aggregate
/// (possibly followed by a comparison), or right after `}` (possibly after a
/// comparison).
fn bound_tokens(src: &str, toks: &[Token]) -> BTreeSet<usize> {
    let text = |i: usize| toks.get(i).map(|t| t.text(src)).unwrap_or("");
    let opens = |i: usize| text(i) == "{" || toks.get(i).is_some_and(|t| t.kind == TokenKind::Directive);
    let mut out = BTreeSet::new();
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Number {
            continue;
        }
        let before = |k: usize| i.checked_sub(k).map(text).unwrap_or("");
        let after_close = before(1) == "}" || (COMPARISONS.contains(&before(1)) && before(2) == "}");
        let before_open = opens(i + 1) || (COMPARISONS.contains(&text(i + 1)) && opens(i + 2));
        if after_close || before_open {
            out.insert(i);
        }
    }
    out
}

/// For each atom `name(...)`, the token indices of arguments that are a
/// single variable.
fn atom_arguments(src: &str, toks: &[Token]) -> Vec<(String, Vec<usize>)> {
    let text = |t: &Token| t.text(src);
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if toks[i].kind != TokenKind::Ident || toks.get(i + 1).map(text) != Some("(") {
            continue;
        }
        let mut depth = 0;
        let mut arg_start = i + 2;
        let mut vars = Vec::new();
        for j in i + 1..toks.len() {
            match text(&toks[j]) {
                "(" | "{" | "[" => depth += 1,
                ")" | "}" | "]" | "," | ";" if depth == 1 => {
                    if j == arg_start + 1 && toks[arg_start].kind == TokenKind::Variable {
                        vars.push(arg_start);
                    }
                    arg_start = j + 1;
                    if text(&toks[j]) == ")" {
                        break;
                    }
                    if text(&toks[j]) == ";" {
                        // Pools: only the first alternative is considered.
                        break;
                    }
                }
                ")" | "}" | "]" => depth -= 1,
                _ => {}
            }
        }
        if vars.len() >= 2 {
            out.push((text(&toks[i]).to_string(), vars));
        }
    }
    out
}

fn apply(p: &Program, site: &Site) -> Option<Program> {
    let mut src = String::new();
    for (i, r) in p.rules().iter().enumerate() {
        if i == site.rule {
            match &site.edit {
                None => continue,
                Some((s, e, rep)) => {
                    let mut t = r.text.clone();
                    t.replace_range(*s..*e, rep);
                    src.push_str(&t);
                }
            }
        } else {
            src.push_str(&r.text);
        }
        src.push('\n');
    }
    parse_program(&src).ok()
}

/// `count` distinct, syntactically valid mutants of `gold`, reproducible
/// from `seed`. Operators are drawn uniformly among those with sites left.
pub fn generate_mutants(
    solver: &Solver,
    gold: &Program,
    count: usize,
    seed: u64,
    timeout: Duration,
) -> Result<Vec<Mutant>, MutationError> {
    if count == 0 {
        return Err(MutationError::ZeroCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<(MutationKind, Vec<Site>)> = sites(gold).into_iter().collect();
    for (_, v) in &mut pools {
        v.shuffle(&mut rng);
    }
    let mut seen: BTreeSet<String> = [gold.source_hash().to_string()].into();
    let mut out = Vec::new();
    while out.len() < count {
        pools.retain(|(_, v)| !v.is_empty());
        if pools.is_empty() {
            return Err(MutationError::ExhaustedMutationSpace {
                possible: out.len(),
                requested: count,
            });
        }
        let k = rng.random_range(0..pools.len());
        let site = pools[k].1.pop().expect("nonempty pool");
        let Some(program) = apply(gold, &site) else { continue };
        if !seen.insert(program.source_hash().to_string()) {
            continue;
        }
        if solver.check_program(&program, timeout)? != SyntaxCheck::Ok {
            continue;
        }
        out.push(Mutant {
            id: out.len() + 1,
            program,
            lineage: Lineage {
                kind: site.kind,
                rule: site.rule,
                detail: site.detail,
            },
        });
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("gold program scores {accuracy} on its own suite; failing cases: {failing:?}")]
    GoldFailsSuite { accuracy: f64, failing: Vec<String> },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantScore {
    pub id: usize,
    pub source_hash: String,
    pub lineage: Lineage,
    pub suite_accuracy: f64,
    /// `None` when model-based scoring did not complete.
    pub model_f1: Option<f64>,
    pub survived: bool,
    pub adjudicated: bool,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mutants: Vec<MutantScore>,
}

impl ValidationReport {
    pub fn survivors(&self) -> impl Iterator<Item = &MutantScore> {
        self.mutants.iter().filter(|m| m.survived)
    }

    pub fn unadjudicated_survivors(&self) -> impl Iterator<Item = &MutantScore> {
        self.survivors().filter(|m| !m.adjudicated)
    }

    /// Every mutant fails some case, or is recorded as equivalent.
    pub fn passed(&self) -> bool {
        self.unadjudicated_survivors().next().is_none()
    }
}

pub struct ValidationInput<'a> {
    pub gold: &'a Program,
    pub suite: &'a TestSuite,
    pub instances: &'a [Instance],
    pub outputs: &'a BTreeSet<PredicateSignature>,
    /// Source hashes of mutants judged equivalent to the gold program.
    pub adjudicated: &'a BTreeSet<String>,
    pub eval: EvalConfig,
}

pub fn validate_suite(
    solver: &Solver,
    input: &ValidationInput<'_>,
    mutants: &[Mutant],
) -> Result<ValidationReport, ValidationError> {
    let timeout = input.eval.timeout;
    let gold = run_suite(solver, input.gold, input.suite, timeout)?;
    if gold.accuracy < 1.0 {
        return Err(ValidationError::GoldFailsSuite {
            accuracy: gold.accuracy,
            failing: gold
                .cases
                .iter()
                .filter(|c| !c.outcome.passed())
                .map(|c| format!("{}: {:?}", c.name, c.outcome))
                .collect(),
        });
    }
    let mut scores = Vec::with_capacity(mutants.len());
    for m in mutants {
        let suite = run_suite(solver, &m.program, input.suite, timeout)?;
        let model = evaluate_model_based(
            solver,
            &m.program,
            input.gold,
            input.instances,
            input.outputs,
            &input.eval,
        )?;
        let survived = suite.accuracy >= 1.0;
        scores.push(MutantScore {
            id: m.id,
            source_hash: m.program.source_hash().to_string(),
            lineage: m.lineage.clone(),
            suite_accuracy: suite.accuracy,
            model_f1: (!model.partial).then_some(model.scores.f1),
            survived,
            adjudicated: survived && input.adjudicated.contains(m.program.source_hash()),
            source: m.program.to_source(),
        });
    }
    Ok(ValidationReport { mutants: scores })
}

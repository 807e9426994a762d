//! Lexical handling of ASP source text.
//!
//! Programs are segmented into rules and classified by kind; predicate
//! occurrences are indexed by byte span so renaming and fact stripping can
//! splice source text directly. No AST of aggregates or arithmetic is built:
//! grounding and semantics stay with the solver.

mod atom;
mod lexer;
mod mapping;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use atom::{is_identifier, project_atoms, GroundAtom, PredicateSignature, Term};
pub use lexer::{tokenize, LexError, Token, TokenKind};
pub use mapping::{strip_fences, PredicateMapping, UnparseableMapping, NO_SEMANTIC_MATCH};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("lex error at {0}")]
    Lex(#[from] LexError),
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("invalid predicate signature `{0}`")]
    InvalidSignature(String),
    #[error("invalid ground atom: {0}")]
    InvalidAtom(String),
    #[error("mapping collision: {0}")]
    MappingCollision(String),
    #[error("mapping is `No semantic match`; nothing to rename")]
    NoSemanticMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Fact,
    NormalRule,
    ChoiceRule,
    StrongConstraint,
    WeakConstraint,
    Directive,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleText {
    pub kind: RuleKind,
    /// Verbatim source, trimmed.
    pub text: String,
    /// Priority level; set iff `kind == WeakConstraint`.
    pub weak_level: Option<i64>,
}

/// One occurrence of a predicate name inside a rule. `start..end` is the byte
/// range of the name within `RuleText::text`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occurrence {
    pub rule: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct Program {
    rules: Vec<RuleText>,
    predicate_index: BTreeMap<PredicateSignature, Vec<Occurrence>>,
    source_hash: String,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl Eq for Program {}

impl Program {
    pub fn empty() -> Self {
        Self::from_rules(Vec::new(), BTreeMap::new())
    }

    fn from_rules(rules: Vec<RuleText>, predicate_index: BTreeMap<PredicateSignature, Vec<Occurrence>>) -> Self {
        let mut p = Self {
            rules,
            predicate_index,
            source_hash: String::new(),
        };
        p.source_hash = content_digest(&p.to_source());
        p
    }

    pub fn rules(&self) -> &[RuleText] {
        &self.rules
    }

    pub fn predicate_index(&self) -> &BTreeMap<PredicateSignature, Vec<Occurrence>> {
        &self.predicate_index
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn predicates(&self) -> BTreeSet<PredicateSignature> {
        self.predicate_index.keys().cloned().collect()
    }

    /// Predicate names regardless of arity.
    pub fn predicate_names(&self) -> BTreeSet<&str> {
        self.predicate_index.keys().map(|s| s.name.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn count(&self, kind: RuleKind) -> usize {
        self.rules.iter().filter(|r| r.kind == kind).count()
    }

    pub fn has_weak_constraints(&self) -> bool {
        self.rules.iter().any(|r| r.kind == RuleKind::WeakConstraint)
    }

    /// One rule per line.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&r.text);
            out.push('\n');
        }
        out
    }

    /// Concatenation of several programs, reparsed.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Program>) -> Program {
        let mut rules = Vec::new();
        for p in parts {
            rules.extend(p.rules.iter().cloned());
        }
        reindex(rules)
    }

    pub fn with_rules(&self, rules: Vec<RuleText>) -> Program {
        reindex(rules)
    }

    /// Highest weak-constraint priority, or 0 without weak constraints.
    pub fn max_weak_level(&self) -> i64 {
        self.rules.iter().filter_map(|r| r.weak_level).max().unwrap_or(0)
    }

    /// Removes ground facts over `inputs`; rules that merely mention input
    /// predicates are kept.
    pub fn strip_input_facts(&self, inputs: &BTreeSet<PredicateSignature>) -> Program {
        let mut drop = vec![false; self.rules.len()];
        for (sig, occs) in &self.predicate_index {
            if !inputs.contains(sig) {
                continue;
            }
            for o in occs {
                if self.rules[o.rule].kind == RuleKind::Fact {
                    drop[o.rule] = true;
                }
            }
        }
        let rules = self
            .rules
            .iter()
            .zip(drop)
            .filter(|(_, d)| !d)
            .map(|(r, _)| r.clone())
            .collect();
        reindex(rules)
    }

    /// Removes `#show` directives so projection stays under harness control.
    pub fn drop_show_directives(&self) -> Program {
        let rules = self
            .rules
            .iter()
            .filter(|r| !(r.kind == RuleKind::Directive && r.text.starts_with("#show")))
            .cloned()
            .collect();
        reindex(rules)
    }

    /// Rewrites candidate predicate names into gold names.
    ///
    /// Renaming is by name across all arities. Fails when two distinct
    /// predicate names of the program would end up with the same name.
    pub fn rename_predicates(&self, mapping: &PredicateMapping) -> Result<Program, SyntaxError> {
        let pairs = match mapping {
            PredicateMapping::NoSemanticMatch => return Err(SyntaxError::NoSemanticMatch),
            PredicateMapping::Pairs(pairs) => pairs,
        };
        let present = self.predicate_names();
        let mut rename: BTreeMap<&str, &str> = BTreeMap::new();
        for (gold, cand) in pairs {
            for name in [gold, cand] {
                if !is_identifier(name) {
                    return Err(SyntaxError::InvalidIdentifier(name.clone()));
                }
            }
            if !present.contains(cand.as_str()) {
                continue;
            }
            if let Some(prev) = rename.insert(cand, gold) {
                if prev != gold {
                    return Err(SyntaxError::MappingCollision(format!(
                        "`{cand}` maps to both `{prev}` and `{gold}`"
                    )));
                }
            }
        }
        let mut targets: BTreeMap<&str, &str> = BTreeMap::new();
        for &name in &present {
            let to = rename.get(name).copied().unwrap_or(name);
            if let Some(other) = targets.insert(to, name) {
                return Err(SyntaxError::MappingCollision(format!(
                    "`{other}` and `{name}` would both become `{to}`"
                )));
            }
        }
        if rename.iter().all(|(c, g)| c == g) {
            return Ok(self.clone());
        }

        let mut edits: Vec<Vec<(usize, usize, &str)>> = vec![Vec::new(); self.rules.len()];
        for (sig, occs) in &self.predicate_index {
            if let Some(to) = rename.get(sig.name.as_str()) {
                for o in occs {
                    edits[o.rule].push((o.start, o.end, to));
                }
            }
        }
        let rules = self
            .rules
            .iter()
            .zip(edits)
            .map(|(r, mut e)| {
                if e.is_empty() {
                    return r.clone();
                }
                e.sort_by_key(|x| x.0);
                let mut text = String::with_capacity(r.text.len());
                let mut last = 0;
                for (s, t, to) in e {
                    text.push_str(&r.text[last..s]);
                    text.push_str(to);
                    last = t;
                }
                text.push_str(&r.text[last..]);
                RuleText { text, ..r.clone() }
            })
            .collect();
        Ok(reindex(rules))
    }

    /// Predicates that get renamed to a gold name whose gold arity differs.
    pub fn arity_conflicts(&self, gold: &Program, mapping: &PredicateMapping) -> Vec<(String, usize, usize)> {
        let PredicateMapping::Pairs(pairs) = mapping else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (g, c) in pairs {
            let gold_ar: BTreeSet<usize> = gold
                .predicate_index
                .keys()
                .filter(|s| &s.name == g)
                .map(|s| s.arity)
                .collect();
            for sig in self.predicate_index.keys().filter(|s| &s.name == c) {
                if let Some(&ga) = gold_ar.iter().next() {
                    if !gold_ar.contains(&sig.arity) {
                        out.push((c.clone(), sig.arity, ga));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_source())
    }
}

impl std::str::FromStr for Program {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_program(s)
    }
}

/// Hex SHA-256 of the text.
pub fn content_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn reindex(rules: Vec<RuleText>) -> Program {
    let src: String = rules.iter().map(|r| format!("{}\n", r.text)).collect();
    // Every rule text was produced by a successful parse, so reparsing the
    // concatenation cannot fail lexically.
    parse_program(&src).unwrap_or_else(|_| Program::from_rules(rules, BTreeMap::new()))
}

/// Tokenizes, segments and classifies `source`.
pub fn parse_program(source: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut rules = Vec::new();
    let mut index: BTreeMap<PredicateSignature, Vec<Occurrence>> = BTreeMap::new();

    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        if tok.kind == TokenKind::Comment {
            rules.push(RuleText {
                kind: RuleKind::Comment,
                text: tok.text(source).trim_end().to_string(),
                weak_level: None,
            });
            i += 1;
            continue;
        }
        let end = rule_end(source, &tokens, i)?;
        let start_byte = tok.start;
        let end_byte = tokens[end - 1].end;
        let body: Vec<Token> = tokens[i..end]
            .iter()
            .filter(|t| t.kind != TokenKind::Comment)
            .copied()
            .collect();
        let (kind, weak_level) = classify(source, &body);
        let rule_idx = rules.len();
        for (sig, s, e) in atom_occurrences(source, &body, kind) {
            index.entry(sig).or_default().push(Occurrence {
                rule: rule_idx,
                start: s - start_byte,
                end: e - start_byte,
            });
        }
        rules.push(RuleText {
            kind,
            text: source[start_byte..end_byte].to_string(),
            weak_level,
        });
        i = end;
    }
    Ok(Program::from_rules(rules, index))
}

/// Index one past the last token of the rule starting at `start`.
fn rule_end(src: &str, toks: &[Token], start: usize) -> Result<usize, SyntaxError> {
    let mut stack: Vec<(char, Token)> = Vec::new();
    let weak = toks[start].text(src) == ":~";
    let mut i = start;
    while i < toks.len() {
        let t = toks[i];
        if t.kind == TokenKind::Punct {
            match t.text(src) {
                "(" => stack.push(('(', t)),
                "{" => stack.push(('{', t)),
                "[" => stack.push(('[', t)),
                close @ (")" | "}" | "]") => {
                    let want = match close {
                        ")" => '(',
                        "}" => '{',
                        _ => '[',
                    };
                    match stack.pop() {
                        Some((open, _)) if open == want => {}
                        _ => {
                            return Err(LexError {
                                line: t.line,
                                col: t.col,
                                message: format!("unbalanced `{close}`"),
                            }
                            .into())
                        }
                    }
                }
                "." if stack.is_empty() => {
                    if weak {
                        if let Some(j) = weak_tail_end(src, toks, i + 1)? {
                            return Ok(j);
                        }
                    }
                    return Ok(i + 1);
                }
                _ => {}
            }
        }
        i += 1;
    }
    if let Some((open, t)) = stack.pop() {
        return Err(LexError {
            line: t.line,
            col: t.col,
            message: format!("unclosed `{open}`"),
        }
        .into());
    }
    Ok(toks.len())
}

/// For `:~ body. [w@p,...]`, the index one past the closing `]`.
fn weak_tail_end(src: &str, toks: &[Token], from: usize) -> Result<Option<usize>, SyntaxError> {
    let mut j = from;
    while j < toks.len() && toks[j].kind == TokenKind::Comment {
        j += 1;
    }
    if j >= toks.len() || toks[j].text(src) != "[" {
        return Ok(None);
    }
    let open = toks[j];
    let mut depth = 0usize;
    for (k, t) in toks.iter().enumerate().skip(j) {
        match t.text(src) {
            "[" | "(" | "{" if t.kind == TokenKind::Punct => depth += 1,
            "]" | ")" | "}" if t.kind == TokenKind::Punct => {
                depth -= 1;
                if depth == 0 {
                    return Ok(Some(k + 1));
                }
            }
            _ => {}
        }
    }
    Err(LexError {
        line: open.line,
        col: open.col,
        message: "unclosed `[`".into(),
    }
    .into())
}

const DIRECTIVES: &[&str] = &[
    "#show",
    "#const",
    "#include",
    "#program",
    "#external",
    "#project",
    "#heuristic",
    "#defined",
    "#script",
    "#theory",
    "#edge",
];

const AGGREGATES: &[&str] = &[
    "#count",
    "#sum",
    "#min",
    "#max",
    "#minimize",
    "#maximize",
    "#minimise",
    "#maximise",
];

fn classify(src: &str, toks: &[Token]) -> (RuleKind, Option<i64>) {
    let Some(first) = toks.first() else {
        return (RuleKind::NormalRule, None);
    };
    let text = |t: &Token| t.text(src);
    if first.kind == TokenKind::Directive {
        let d = text(first);
        if matches!(d, "#minimize" | "#maximize" | "#minimise" | "#maximise") {
            return (RuleKind::WeakConstraint, Some(optimize_level(src, toks)));
        }
        if DIRECTIVES.contains(&d) {
            return (RuleKind::Directive, None);
        }
    }
    match text(first) {
        ":-" => return (RuleKind::StrongConstraint, None),
        ":~" => return (RuleKind::WeakConstraint, Some(weak_tail_level(src, toks))),
        _ => {}
    }
    let mut depth = 0i32;
    let mut head_end = toks.len();
    let mut choice = false;
    let mut disjunctive = false;
    for (k, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Punct {
            continue;
        }
        match text(t) {
            "(" | "[" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            "{" => {
                if depth == 0 {
                    choice = true;
                }
                depth += 1;
            }
            ";" | "|" if depth == 0 => disjunctive = true,
            ":-" if depth == 0 => {
                head_end = k;
                break;
            }
            _ => {}
        }
    }
    if choice {
        return (RuleKind::ChoiceRule, None);
    }
    let has_body = head_end < toks.len();
    let head = &toks[..head_end.min(toks.len())];
    let head = match head.last() {
        Some(t) if text(t) == "." => &head[..head.len() - 1],
        _ => head,
    };
    let single_atom = {
        let h = if head.first().map(text) == Some("-") {
            &head[1..]
        } else {
            head
        };
        !h.is_empty()
            && h[0].kind == TokenKind::Ident
            && (h.len() == 1 || (text(&h[1]) == "(" && h.last().map(text) == Some(")")))
    };
    let ground = !head.iter().any(|t| t.kind == TokenKind::Variable);
    if !has_body && !disjunctive && single_atom && ground {
        (RuleKind::Fact, None)
    } else {
        (RuleKind::NormalRule, None)
    }
}

/// Parses the integer following `@` in a `w@p, ...` weight tuple, if present.
fn level_after_at(src: &str, toks: &[Token]) -> Option<i64> {
    let at = toks.iter().position(|t| t.text(src) == "@")?;
    let rest = &toks[at + 1..];
    match rest {
        [m, n, ..] if m.text(src) == "-" && n.kind == TokenKind::Number => n.text(src).parse::<i64>().ok().map(|v| -v),
        [n, ..] if n.kind == TokenKind::Number => n.text(src).parse().ok(),
        _ => None,
    }
}

fn weak_tail_level(src: &str, toks: &[Token]) -> i64 {
    let Some(open) = toks.iter().rposition(|t| t.text(src) == "[") else {
        return 0;
    };
    let tail = &toks[open + 1..];
    // Only the weight tuple before the first top-level comma carries `@`.
    let mut depth = 0;
    let mut cut = tail.len();
    for (k, t) in tail.iter().enumerate() {
        match t.text(src) {
            "(" => depth += 1,
            ")" => depth -= 1,
            "," | "]" if depth == 0 => {
                cut = k;
                break;
            }
            _ => {}
        }
    }
    level_after_at(src, &tail[..cut]).unwrap_or(0)
}

fn optimize_level(src: &str, toks: &[Token]) -> i64 {
    let Some(open) = toks.iter().position(|t| t.text(src) == "{") else {
        return 0;
    };
    let mut levels = Vec::new();
    let mut depth = 0;
    let mut elem_start = open + 1;
    let mut in_weight = true;
    for k in open + 1..toks.len() {
        let t = toks[k].text(src);
        match t {
            "(" | "{" => depth += 1,
            ")" => depth -= 1,
            "}" if depth == 0 => {
                if in_weight {
                    levels.push(level_after_at(src, &toks[elem_start..k]).unwrap_or(0));
                }
                break;
            }
            "}" => depth -= 1,
            ":" if depth == 0 && in_weight => {
                levels.push(level_after_at(src, &toks[elem_start..k]).unwrap_or(0));
                in_weight = false;
            }
            ";" if depth == 0 => {
                if in_weight && k > elem_start {
                    levels.push(level_after_at(src, &toks[elem_start..k]).unwrap_or(0));
                }
                elem_start = k + 1;
                in_weight = true;
            }
            _ => {}
        }
    }
    levels.into_iter().max().unwrap_or(0)
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Paren,
    Bracket,
    Choice { after_colon: bool },
    Aggregate { after_colon: bool },
}

fn is_literal_start(src: &str, prev: Option<&Token>) -> bool {
    match prev {
        None => true,
        Some(t) => match t.kind {
            TokenKind::Punct => matches!(t.text(src), ":-" | ":~" | "," | ";" | ":" | "{" | "|"),
            TokenKind::Ident => t.text(src) == "not",
            TokenKind::Directive => matches!(t.text(src), "#external" | "#heuristic" | "#project"),
            _ => false,
        },
    }
}

const TERM_OPS: &[&str] = &[
    "=", "==", "!=", "<>", "<", "<=", ">", ">=", "+", "-", "*", "/", "\\", "**", "..", "&", "^", "?",
];

/// `(signature, byte start, byte end)` for every atom name in the rule.
fn atom_occurrences(src: &str, toks: &[Token], kind: RuleKind) -> Vec<(PredicateSignature, usize, usize)> {
    let mut out = Vec::new();
    if kind == RuleKind::Comment {
        return out;
    }
    let text = |t: &Token| t.text(src);
    if kind == RuleKind::Directive && toks.first().map(text) == Some("#show") {
        // `#show name/arity.`
        if let [_, n, slash, a, ..] = toks {
            if n.kind == TokenKind::Ident && text(slash) == "/" && a.kind == TokenKind::Number {
                if let Ok(arity) = text(a).parse() {
                    out.push((
                        PredicateSignature {
                            name: text(n).to_string(),
                            arity,
                        },
                        n.start,
                        n.end,
                    ));
                }
                return out;
            }
        }
    } else if kind == RuleKind::Directive
        && !matches!(toks.first().map(text), Some("#external" | "#heuristic" | "#project"))
    {
        return out;
    }

    let mut stack: Vec<Ctx> = Vec::new();
    for k in 0..toks.len() {
        let t = &toks[k];
        let prev = k.checked_sub(1).map(|p| &toks[p]);
        if t.kind == TokenKind::Punct {
            match text(t) {
                "(" => stack.push(Ctx::Paren),
                "[" => stack.push(Ctx::Bracket),
                "{" => {
                    let agg = match prev {
                        Some(p) if p.kind == TokenKind::Directive => AGGREGATES.contains(&text(p)),
                        Some(p) if text(p) == "+" => k >= 2 && text(&toks[k - 2]) == "#sum",
                        _ => false,
                    };
                    stack.push(if agg {
                        Ctx::Aggregate { after_colon: false }
                    } else {
                        Ctx::Choice { after_colon: false }
                    });
                }
                ")" | "]" | "}" => {
                    stack.pop();
                }
                ":" => {
                    if let Some(Ctx::Choice { after_colon } | Ctx::Aggregate { after_colon }) = stack.last_mut() {
                        *after_colon = true;
                    }
                }
                ";" => {
                    if let Some(Ctx::Choice { after_colon } | Ctx::Aggregate { after_colon }) = stack.last_mut() {
                        *after_colon = false;
                    }
                }
                _ => {}
            }
            continue;
        }
        if t.kind != TokenKind::Ident || text(t) == "not" {
            continue;
        }
        let atom_ctx = match stack.last() {
            None => true,
            Some(Ctx::Choice { .. }) => true,
            Some(Ctx::Aggregate { after_colon }) => *after_colon,
            Some(Ctx::Paren | Ctx::Bracket) => false,
        };
        if !atom_ctx {
            continue;
        }
        let starts_literal = is_literal_start(src, prev)
            || (prev.map(text) == Some("-") && is_literal_start(src, k.checked_sub(2).map(|p| &toks[p])));
        if !starts_literal {
            continue;
        }
        let next = toks.get(k + 1).map(text);
        if next.is_some_and(|n| TERM_OPS.contains(&n)) {
            continue;
        }
        let arity = if next == Some("(") {
            paren_arity(src, &toks[k + 1..])
        } else {
            0
        };
        out.push((
            PredicateSignature {
                name: text(t).to_string(),
                arity,
            },
            t.start,
            t.end,
        ));
    }
    out
}

/// Arity of an argument list starting at `(`; pools count their first
/// alternative only.
fn paren_arity(src: &str, toks: &[Token]) -> usize {
    let mut depth = 0;
    let mut commas = 0;
    let mut any = false;
    for t in toks {
        let s = if t.kind == TokenKind::Punct { t.text(src) } else { "" };
        match s {
            "(" | "{" | "[" => {
                depth += 1;
                if depth == 1 {
                    continue;
                }
            }
            ")" | "}" | "]" => {
                depth -= 1;
                if depth == 0 {
                    break;
                }
            }
            "," if depth == 1 => commas += 1,
            ";" if depth == 1 => break,
            _ => {}
        }
        any = true;
    }
    if any {
        commas + 1
    } else {
        0
    }
}

#[cfg(test)]
mod tests;

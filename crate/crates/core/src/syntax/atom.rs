use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::lexer::{tokenize, Token, TokenKind};
use super::SyntaxError;

/// `name/arity`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredicateSignature {
    pub name: String,
    pub arity: usize,
}

impl PredicateSignature {
    pub fn new(name: impl Into<String>, arity: usize) -> Result<Self, SyntaxError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(SyntaxError::InvalidIdentifier(name));
        }
        Ok(Self { name, arity })
    }
}

impl fmt::Display for PredicateSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

impl FromStr for PredicateSignature {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arity) = s
            .trim()
            .rsplit_once('/')
            .ok_or_else(|| SyntaxError::InvalidSignature(s.to_string()))?;
        let arity = arity
            .parse()
            .map_err(|_| SyntaxError::InvalidSignature(s.to_string()))?;
        Self::new(name, arity)
    }
}

impl Serialize for PredicateSignature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PredicateSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// True for names the solver accepts as predicate or constant symbols.
pub fn is_identifier(name: &str) -> bool {
    let rest = name.trim_start_matches('_');
    let mut chars = rest.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Int(i64),
    Sym(String),
    /// String literal, stored with its escapes as written.
    Str(String),
    Func(String, Vec<Term>),
    Tuple(Vec<Term>),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_term(self))
    }
}

/// A ground atom as reported by the solver.
///
/// Equality, ordering and hashing all go through the canonical rendering.
#[derive(Debug, Clone)]
pub struct GroundAtom {
    pub predicate: String,
    pub negated: bool,
    pub args: Vec<Term>,
    canonical: String,
}

impl GroundAtom {
    pub fn new(predicate: impl Into<String>, negated: bool, args: Vec<Term>) -> Self {
        let predicate = predicate.into();
        let mut canonical = String::new();
        if negated {
            canonical.push('-');
        }
        canonical.push_str(&predicate);
        if !args.is_empty() {
            canonical.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    canonical.push(',');
                }
                canonical.push_str(&render_term(a));
            }
            canonical.push(')');
        }
        Self {
            predicate,
            negated,
            args,
            canonical,
        }
    }

    pub fn canonical_text(&self) -> &str {
        &self.canonical
    }

    pub fn signature(&self) -> PredicateSignature {
        PredicateSignature {
            name: self.predicate.clone(),
            arity: self.args.len(),
        }
    }

    /// The atom as a term, for reification (`trueInGold(1, p(a))`).
    pub fn as_term(&self) -> Term {
        let name = if self.negated {
            format!("-{}", self.predicate)
        } else {
            self.predicate.clone()
        };
        if self.args.is_empty() {
            Term::Sym(name)
        } else {
            Term::Func(name, self.args.clone())
        }
    }
}

fn render_term(t: &Term) -> String {
    match t {
        Term::Int(n) => n.to_string(),
        Term::Sym(s) => s.clone(),
        Term::Str(s) => format!("\"{s}\""),
        Term::Tuple(args) if args.len() == 1 => format!("({},)", render_term(&args[0])),
        Term::Tuple(args) => format!("({})", args.iter().map(render_term).collect::<Vec<_>>().join(",")),
        Term::Func(name, args) => format!("{name}({})", args.iter().map(render_term).collect::<Vec<_>>().join(",")),
    }
}

impl PartialEq for GroundAtom {
    fn eq(&self, other: &Self) -> bool {
        self.canonical == other.canonical
    }
}

impl Eq for GroundAtom {}

impl PartialOrd for GroundAtom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroundAtom {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical.cmp(&other.canonical)
    }
}

impl Hash for GroundAtom {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical.hash(state)
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

impl Serialize for GroundAtom {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.canonical)
    }
}

impl<'de> Deserialize<'de> for GroundAtom {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for GroundAtom {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks: Vec<Token> = tokenize(s)?
            .into_iter()
            .filter(|t| t.kind != TokenKind::Comment)
            .collect();
        let mut p = TermParser {
            src: s,
            toks: &toks,
            pos: 0,
        };
        let atom = p.atom()?;
        if p.pos != toks.len() {
            return Err(p.error("trailing input"));
        }
        Ok(atom)
    }
}

struct TermParser<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
}

impl TermParser<'_> {
    fn error(&self, msg: &str) -> SyntaxError {
        SyntaxError::InvalidAtom(format!("{msg} in {:?}", self.src))
    }

    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|t| t.text(self.src))
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn atom(&mut self) -> Result<GroundAtom, SyntaxError> {
        let negated = self.peek() == Some("-");
        if negated {
            self.pos += 1;
        }
        let name = match self.next() {
            Some(t) if t.kind == TokenKind::Ident => t.text(self.src).to_string(),
            _ => return Err(self.error("expected predicate name")),
        };
        let args = if self.peek() == Some("(") {
            self.pos += 1;
            self.term_list(")")?
        } else {
            Vec::new()
        };
        Ok(GroundAtom::new(name, negated, args))
    }

    fn term_list(&mut self, close: &str) -> Result<Vec<Term>, SyntaxError> {
        let mut args = Vec::new();
        if self.peek() == Some(close) {
            self.pos += 1;
            return Ok(args);
        }
        loop {
            args.push(self.term()?);
            match self.next().map(|t| t.text(self.src)) {
                Some(",") if self.peek() == Some(close) => {
                    self.pos += 1;
                    return Ok(args);
                }
                Some(",") => continue,
                Some(c) if c == close => return Ok(args),
                _ => return Err(self.error("malformed argument list")),
            }
        }
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        let Some(tok) = self.next() else {
            return Err(self.error("unexpected end"));
        };
        let text = tok.text(self.src);
        match tok.kind {
            TokenKind::Number => text
                .parse()
                .map(Term::Int)
                .map_err(|_| self.error("integer out of range")),
            TokenKind::Str => Ok(Term::Str(text[1..text.len() - 1].to_string())),
            TokenKind::Ident => {
                if self.peek() == Some("(") {
                    self.pos += 1;
                    Ok(Term::Func(text.to_string(), self.term_list(")")?))
                } else {
                    Ok(Term::Sym(text.to_string()))
                }
            }
            TokenKind::Punct if text == "-" => match self.term()? {
                Term::Int(n) => Ok(Term::Int(-n)),
                Term::Sym(s) => Ok(Term::Sym(format!("-{s}"))),
                Term::Func(name, args) => Ok(Term::Func(format!("-{name}"), args)),
                _ => Err(self.error("cannot negate term")),
            },
            TokenKind::Punct if text == "(" => {
                let items = self.term_list(")")?;
                Ok(Term::Tuple(items))
            }
            TokenKind::Directive if matches!(text, "#inf" | "#sup") => Ok(Term::Sym(text.to_string())),
            _ => Err(self.error("unexpected token")),
        }
    }
}

/// Keeps the atoms whose `name/arity` is in `preds`.
pub fn project_atoms<'a, I>(atoms: I, preds: &BTreeSet<PredicateSignature>) -> BTreeSet<GroundAtom>
where
    I: IntoIterator<Item = &'a GroundAtom>,
{
    atoms
        .into_iter()
        .filter(|a| !a.negated && preds.iter().any(|p| p.name == a.predicate && p.arity == a.args.len()))
        .cloned()
        .collect()
}

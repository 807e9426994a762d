use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gold predicate name to candidate predicate name, in reply order.
///
/// Pairs are kept verbatim; duplicate or colliding names are detected when
/// the mapping is applied, not when it is parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateMapping {
    Pairs(Vec<(String, String)>),
    NoSemanticMatch,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("reply is neither a mapping nor `No semantic match`: {0:?}")]
pub struct UnparseableMapping(pub String);

pub const NO_SEMANTIC_MATCH: &str = "No semantic match";

impl PredicateMapping {
    pub fn identity<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PredicateMapping::Pairs(
            names
                .into_iter()
                .map(|n| {
                    let n = n.into();
                    (n.clone(), n)
                })
                .collect(),
        )
    }

    /// Parses a matcher reply: either the literal `No semantic match` or a
    /// brace-delimited dictionary of quoted name pairs.
    pub fn parse_reply(reply: &str) -> Result<Self, UnparseableMapping> {
        let fail = || UnparseableMapping(reply.to_string());
        let body = strip_fences(reply).trim();
        let unquoted = body
            .trim_end_matches('.')
            .trim_matches(|c| c == '\'' || c == '"' || c == '`')
            .trim();
        if unquoted.eq_ignore_ascii_case(NO_SEMANTIC_MATCH) {
            return Ok(PredicateMapping::NoSemanticMatch);
        }
        let inner = body
            .strip_prefix('{')
            .and_then(|b| b.strip_suffix('}'))
            .ok_or_else(fail)?;

        let mut pairs = Vec::new();
        let mut chars = inner.char_indices().peekable();
        let quoted = |chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>| {
            skip_ws(chars);
            let (_, q) = chars.next()?;
            if q != '\'' && q != '"' {
                return None;
            }
            let mut s = String::new();
            for (_, c) in chars.by_ref() {
                if c == q {
                    return Some(s);
                }
                s.push(c);
            }
            None
        };
        loop {
            skip_ws(&mut chars);
            if chars.peek().is_none() {
                break;
            }
            let key = quoted(&mut chars).ok_or_else(fail)?;
            skip_ws(&mut chars);
            if chars.next().map(|(_, c)| c) != Some(':') {
                return Err(fail());
            }
            let value = quoted(&mut chars).ok_or_else(fail)?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
            skip_ws(&mut chars);
            match chars.next().map(|(_, c)| c) {
                Some(',') | None => {}
                _ => return Err(fail()),
            }
        }
        if pairs.is_empty() {
            return Err(fail());
        }
        Ok(PredicateMapping::Pairs(pairs))
    }
}

fn skip_ws(chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>) {
    while chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
        chars.next();
    }
}

/// Body of the first fenced block, or the text unchanged when there is none.
pub fn strip_fences(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    // Skip the info string (`asp`, `prolog`, ...) up to the end of the line.
    let after = match after.find('\n') {
        Some(nl) if !after[..nl].contains("```") => &after[nl + 1..],
        _ => after,
    };
    match after.find("```") {
        Some(close) => &after[..close],
        None => after,
    }
}

impl fmt::Display for PredicateMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateMapping::NoSemanticMatch => f.write_str(NO_SEMANTIC_MATCH),
            PredicateMapping::Pairs(pairs) => {
                f.write_str("{")?;
                for (i, (g, c)) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "'{g}':'{c}'")?;
                }
                f.write_str("}")
            }
        }
    }
}

//! Tokenizer for the solver's input dialect.
//!
//! Only lexical structure is recovered here. Token offsets are byte offsets
//! into the original source so callers can splice text without reprinting.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Lowercase-initial name (possibly with leading underscores).
    Ident,
    /// Uppercase-initial name or the anonymous `_`.
    Variable,
    Number,
    Str,
    /// `#show`, `#count`, `#minimize`, ...
    Directive,
    Punct,
    Comment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub col: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for LexError {}

const PUNCT: &[&str] = &[
    ":-", ":~", "..", "==", "!=", "<>", "<=", ">=", "**", ".", ",", ";", ":", "(", ")", "{", "}", "[", "]", "@", "=",
    "<", ">", "+", "-", "*", "/", "\\", "|", "~", "&", "^", "?", "!",
];

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn eat_while(&mut self, f: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if !f(c) {
                break;
            }
            self.bump();
        }
    }
}

/// Splits `src` into tokens. Whitespace is dropped; comments are kept.
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor {
        src,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let (start, line, col) = (cur.pos, cur.line, cur.col);
        let kind = if c == '%' {
            if cur.peek_at(1) == Some('*') {
                cur.bump();
                cur.bump();
                let mut closed = false;
                while let Some(c) = cur.bump() {
                    if c == '*' && cur.peek() == Some('%') {
                        cur.bump();
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(LexError {
                        line,
                        col,
                        message: "unterminated block comment".into(),
                    });
                }
            } else {
                cur.eat_while(|c| c != '\n');
            }
            TokenKind::Comment
        } else if c == '"' {
            cur.bump();
            let mut closed = false;
            while let Some(c) = cur.bump() {
                match c {
                    '\\' => {
                        cur.bump();
                    }
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\n' => break,
                    _ => {}
                }
            }
            if !closed {
                return Err(LexError {
                    line,
                    col,
                    message: "unterminated string".into(),
                });
            }
            TokenKind::Str
        } else if c == '#' && cur.peek_at(1).is_some_and(|c| c.is_ascii_alphabetic()) {
            cur.bump();
            cur.eat_while(is_name_char);
            TokenKind::Directive
        } else if c.is_ascii_digit() {
            cur.eat_while(|c| c.is_ascii_digit());
            TokenKind::Number
        } else if c.is_ascii_alphabetic() || c == '_' {
            let rest = &src[cur.pos..];
            let first_letter = rest.trim_start_matches('_').chars().next();
            cur.eat_while(is_name_char);
            match first_letter {
                Some(l) if l.is_ascii_lowercase() => TokenKind::Ident,
                _ => TokenKind::Variable,
            }
        } else {
            let rest = &src[cur.pos..];
            let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) else {
                return Err(LexError {
                    line,
                    col,
                    message: format!("unexpected character {c:?}"),
                });
            };
            for _ in 0..p.len() {
                cur.bump();
            }
            TokenKind::Punct
        };
        out.push(Token {
            kind,
            start,
            end: cur.pos,
            line,
            col,
        });
    }
    Ok(out)
}

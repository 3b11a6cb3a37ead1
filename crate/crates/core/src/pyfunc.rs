//! Lexical segmentation of Python functions into header, docstring and body.
//!
//! The parser never evaluates or fully tokenizes Python. It walks the source
//! once, skipping string literals and comments while it balances brackets, and
//! records three byte spans into the original text. Everything between the
//! spans (indentation, newlines, comments before the docstring) is kept as
//! "gap" text so that the segments always recompose to the input.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::content_id;
use crate::error::{Error, Result};

/// Docstrings with more than this fraction of non-ASCII characters are
/// treated as non-English.
pub const NON_ASCII_LIMIT: f64 = 0.5;

const SPECIAL_TOKENS: [&str; 3] = ["<img", "http://", "https://"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty function text")]
    Empty,
    #[error("expected `def` at function start, found {0:?}")]
    MissingDef(String),
    #[error("unbalanced parentheses in signature")]
    UnbalancedParens,
    #[error("signature is not terminated by `:`")]
    MissingColon,
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
}

/// A Python function split into its three components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeFunction {
    pub code_id: String,
    raw_text: String,
    header: Range<usize>,
    docstring: Range<usize>,
    body: Range<usize>,
}

impl CodeFunction {
    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    /// Decorators and the `def` line(s) up to the colon closing the signature.
    pub fn header(&self) -> &str {
        &self.raw_text[self.header.clone()]
    }

    /// The docstring literal including its quotes, or `""` when absent.
    pub fn docstring(&self) -> &str {
        &self.raw_text[self.docstring.clone()]
    }

    pub fn body(&self) -> &str {
        &self.raw_text[self.body.clone()]
    }

    pub fn has_docstring(&self) -> bool {
        !self.docstring.is_empty()
    }

    pub fn with_id(mut self, code_id: impl Into<String>) -> Self {
        self.code_id = code_id.into();
        self
    }

    fn gap_before_header(&self) -> &str {
        &self.raw_text[..self.header.start]
    }

    fn gap_before_docstring(&self) -> &str {
        &self.raw_text[self.header.end..self.docstring.start]
    }

    fn gap_before_body(&self) -> &str {
        &self.raw_text[self.docstring.end..self.body.start]
    }

    fn trailer(&self) -> &str {
        &self.raw_text[self.body.end..]
    }
}

/// Which components of a function to keep when rendering it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentMask {
    pub keep_header: bool,
    pub keep_docstring: bool,
    pub keep_body: bool,
}

impl ComponentMask {
    pub const ALL: ComponentMask = ComponentMask::new(true, true, true);

    pub const fn new(keep_header: bool, keep_docstring: bool, keep_body: bool) -> Self {
        Self {
            keep_header,
            keep_docstring,
            keep_body,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.keep_header || self.keep_docstring || self.keep_body
    }

    /// The seven valid masks, complete code first.
    pub fn ablation_rows() -> Vec<ComponentMask> {
        vec![
            ComponentMask::ALL,
            ComponentMask::new(false, true, true),
            ComponentMask::new(true, true, false),
            ComponentMask::new(true, false, true),
            ComponentMask::new(false, true, false),
            ComponentMask::new(false, false, true),
            ComponentMask::new(true, false, false),
        ]
    }

    pub fn label(&self) -> String {
        let removed: Vec<&str> = [
            (!self.keep_header, "header"),
            (!self.keep_body, "body"),
            (!self.keep_docstring, "documentation"),
        ]
        .into_iter()
        .filter_map(|(gone, name)| gone.then_some(name))
        .collect();
        if removed.is_empty() {
            "complete code".to_string()
        } else {
            format!("w/o {}", removed.join(" & "))
        }
    }
}

impl Default for ComponentMask {
    fn default() -> Self {
        ComponentMask::ALL
    }
}

impl std::str::FromStr for ComponentMask {
    type Err = Error;

    /// Parses `all` or a `+`-separated subset of `header`, `doc`, `body`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(ComponentMask::ALL);
        }
        let mut mask = ComponentMask::new(false, false, false);
        for part in s.split('+') {
            match part.trim() {
                "header" => mask.keep_header = true,
                "doc" | "docstring" | "documentation" => mask.keep_docstring = true,
                "body" => mask.keep_body = true,
                other => return Err(Error::Config(format!("unknown code component `{other}`"))),
            }
        }
        if !mask.is_valid() {
            return Err(Error::EmptyMask);
        }
        Ok(mask)
    }
}

/// Splits `raw_text` into header, docstring and body spans.
pub fn parse_function(raw_text: &str) -> Result<CodeFunction, ParseError> {
    if raw_text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let bytes = raw_text.as_bytes();
    let header_start = skip_whitespace(bytes, 0);

    // Decorators belong to the header.
    let mut pos = header_start;
    while bytes.get(pos) == Some(&b'@') {
        pos = skip_logical_line(bytes, pos)?;
        pos = skip_whitespace(bytes, pos);
    }

    let rest = &raw_text[pos..];
    let after_kw = if let Some(r) = rest.strip_prefix("async") {
        let r2 = r.trim_start_matches([' ', '\t']);
        if r2.len() == r.len() || !r2.starts_with("def") {
            return Err(ParseError::MissingDef(first_word(rest)));
        }
        pos + (rest.len() - r2.len()) + 3
    } else if rest.starts_with("def") {
        pos + 3
    } else {
        return Err(ParseError::MissingDef(first_word(rest)));
    };
    if !bytes
        .get(after_kw)
        .is_some_and(|b| b.is_ascii_whitespace())
    {
        return Err(ParseError::MissingDef(first_word(rest)));
    }

    let header_end = scan_signature(bytes, after_kw)?;

    let after_header = skip_blank_and_comments(bytes, header_end);
    let (doc_range, body_search_from) = match string_literal_at(bytes, after_header)? {
        Some(end) if ends_statement(bytes, end) => (after_header..end, end),
        _ => (header_end..header_end, header_end),
    };

    let content_end = raw_text.trim_end().len();
    let body_start = skip_whitespace(bytes, body_search_from).min(content_end);
    let body_start = body_start.max(doc_range.end);
    let body = body_start..content_end.max(body_start);

    Ok(CodeFunction {
        code_id: content_id("c", raw_text),
        raw_text: raw_text.to_string(),
        header: header_start..header_end,
        docstring: doc_range,
        body,
    })
}

/// Returns `false` for functions whose documentation contains markup or URLs,
/// or is mostly non-ASCII.
pub fn clean_filter(func: &CodeFunction) -> bool {
    let doc = func.docstring();
    let lower = doc.to_ascii_lowercase();
    if SPECIAL_TOKENS.iter().any(|t| lower.contains(t)) {
        return false;
    }
    non_ascii_ratio(doc) <= NON_ASCII_LIMIT
}

pub fn non_ascii_ratio(text: &str) -> f64 {
    let total = text.chars().count();
    if total == 0 {
        return 0.0;
    }
    text.chars().filter(|c| !c.is_ascii()).count() as f64 / total as f64
}

/// Renders only the kept components, in header → docstring → body order,
/// each preceded by the whitespace that preceded it in the source.
pub fn strip_components(func: &CodeFunction, mask: ComponentMask) -> Result<String> {
    if !mask.is_valid() {
        return Err(Error::EmptyMask);
    }
    let mut out = String::with_capacity(func.raw_text.len());
    if mask.keep_header {
        out.push_str(func.gap_before_header());
        out.push_str(func.header());
    }
    if mask.keep_docstring {
        out.push_str(func.gap_before_docstring());
        out.push_str(func.docstring());
    }
    if mask.keep_body {
        out.push_str(func.gap_before_body());
        out.push_str(func.body());
        out.push_str(func.trailer());
    }
    if !mask.keep_header {
        let trimmed = out.trim_start().len();
        out.drain(..out.len() - trimmed);
    }
    Ok(out)
}

fn first_word(s: &str) -> String {
    s.split_whitespace().next().unwrap_or("").chars().take(20).collect()
}

fn skip_whitespace(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn skip_blank_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        pos = skip_whitespace(bytes, pos);
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

/// Skips one logical line (brackets may span physical lines).
fn skip_logical_line(bytes: &[u8], mut pos: usize) -> Result<usize, ParseError> {
    let mut depth = 0i32;
    while pos < bytes.len() {
        match bytes[pos] {
            b'\n' if depth == 0 => return Ok(pos + 1),
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ParseError::UnbalancedParens);
                }
            }
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            b'\'' | b'"' => {
                pos = skip_string(bytes, pos)?;
                continue;
            }
            _ => {}
        }
        pos += 1;
    }
    if depth != 0 {
        return Err(ParseError::UnbalancedParens);
    }
    Ok(pos)
}

/// From just after `def`, returns the byte offset after the colon that ends
/// the signature.
fn scan_signature(bytes: &[u8], mut pos: usize) -> Result<usize, ParseError> {
    while pos < bytes.len() && bytes[pos] != b'(' {
        match bytes[pos] {
            b')' => return Err(ParseError::UnbalancedParens),
            b':' | b'\n' => return Err(ParseError::UnbalancedParens),
            _ => pos += 1,
        }
    }
    if pos >= bytes.len() {
        return Err(ParseError::UnbalancedParens);
    }
    let mut depth = 0i32;
    while pos < bytes.len() {
        match bytes[pos] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ParseError::UnbalancedParens);
                }
            }
            b':' if depth == 0 => return Ok(pos + 1),
            b'\n' if depth == 0 => {
                // A newline outside brackets before the colon is only legal
                // after an explicit line continuation.
                if pos == 0 || bytes[pos - 1] != b'\\' {
                    return Err(ParseError::MissingColon);
                }
            }
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            b'\'' | b'"' => {
                pos = skip_string(bytes, pos)?;
                continue;
            }
            _ => {}
        }
        pos += 1;
    }
    if depth != 0 {
        Err(ParseError::UnbalancedParens)
    } else {
        Err(ParseError::MissingColon)
    }
}

/// `pos` points at a quote character; returns the offset just past the
/// closing quote.
fn skip_string(bytes: &[u8], pos: usize) -> Result<usize, ParseError> {
    let quote = bytes[pos];
    let triple = bytes.len() >= pos + 3 && bytes[pos + 1] == quote && bytes[pos + 2] == quote;
    let mut i = if triple { pos + 3 } else { pos + 1 };
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\\' {
            i += 2;
            continue;
        }
        if triple {
            if b == quote && i + 2 < bytes.len() && bytes[i + 1] == quote && bytes[i + 2] == quote {
                return Ok(i + 3);
            }
        } else if b == quote {
            return Ok(i + 1);
        } else if b == b'\n' {
            return Err(ParseError::UnterminatedString(pos));
        }
        i += 1;
    }
    Err(ParseError::UnterminatedString(pos))
}

/// If a (possibly prefixed) string literal starts at `pos`, returns its end.
fn string_literal_at(bytes: &[u8], pos: usize) -> Result<Option<usize>, ParseError> {
    let mut i = pos;
    while i < bytes.len() && i - pos < 2 && matches!(bytes[i], b'r' | b'R' | b'u' | b'U' | b'b' | b'B')
    {
        i += 1;
    }
    match bytes.get(i) {
        Some(b'\'') | Some(b'"') => skip_string(bytes, i).map(Some),
        _ => Ok(None),
    }
}

/// True when nothing but whitespace, a comment, or `;` follows on the line.
fn ends_statement(bytes: &[u8], mut pos: usize) -> bool {
    while pos < bytes.len() {
        match bytes[pos] {
            b' ' | b'\t' | b'\r' => pos += 1,
            b'\n' | b'#' | b';' => return true,
            _ => return false,
        }
    }
    true
}

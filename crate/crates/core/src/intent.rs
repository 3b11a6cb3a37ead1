//! Keyword rules that reject queries without code-search intent.
//!
//! A keyword is matched case-insensitively against the lowercased query.
//! Ends of a keyword that are alphanumeric must sit on a word boundary; ends
//! that are symbols match anywhere, so `"()"` and `"c#"` behave as literal
//! substrings on their symbol side. `"a ... b"` matches `a` followed later by
//! `b`, each part matched as above.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_RULES: &str = include_str!("../data/intent_rules.json");

/// Separator for gapped keywords.
pub const GAP: &str = "...";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Keyword {
    Plain(String),
    Pattern {
        pattern: String,
        #[serde(default = "default_whole_word")]
        whole_word: bool,
    },
}

fn default_whole_word() -> bool {
    true
}

impl Keyword {
    pub fn pattern(&self) -> &str {
        match self {
            Keyword::Plain(p) => p,
            Keyword::Pattern { pattern, .. } => pattern,
        }
    }

    pub fn whole_word(&self) -> bool {
        match self {
            Keyword::Plain(_) => true,
            Keyword::Pattern { whole_word, .. } => *whole_word,
        }
    }

    /// True when the keyword occurs in `text`, which must already be lowercased.
    pub fn matches(&self, text: &str) -> bool {
        let pattern = self.pattern().to_lowercase();
        let parts: Vec<&str> = pattern.split(GAP).map(str::trim).filter(|p| !p.is_empty()).collect();
        if parts.is_empty() {
            return false;
        }
        let mut from = 0;
        for part in parts {
            match find_part(text, part, from, self.whole_word()) {
                Some(end) => from = end,
                None => return false,
            }
        }
        true
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// End offset of the first bounded occurrence of `part` at or after `from`.
fn find_part(text: &str, part: &str, from: usize, whole_word: bool) -> Option<usize> {
    let first = part.chars().next()?;
    let last = part.chars().next_back()?;
    let mut start = from;
    while let Some(rel) = text[start..].find(part) {
        let at = start + rel;
        let end = at + part.len();
        let left_ok = !whole_word || !is_word(first) || text[..at].chars().next_back().is_none_or(|c| !is_word(c));
        let right_ok = !whole_word || !is_word(last) || text[end..].chars().next().is_none_or(|c| !is_word(c));
        if left_ok && right_ok {
            return Some(end);
        }
        start = at + text[at..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Ordered categories of rejecting keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    pub categories: IndexMap<String, Vec<Keyword>>,
}

impl Default for RuleSet {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_RULES).expect("bundled rule set is valid JSON")
    }
}

impl RuleSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn keyword_count(&self) -> usize {
        self.categories.values().map(Vec::len).sum()
    }

    pub fn without_category(&self, name: &str) -> RuleSet {
        let mut categories = self.categories.clone();
        categories.shift_remove(name);
        RuleSet { categories }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub has_intent: bool,
    pub matched_category: Option<String>,
    pub matched_keyword: Option<String>,
}

/// Whole-word `python` check on the lowercased query.
pub fn prefilter_python(query: &str) -> bool {
    Keyword::Plain("python".into()).matches(&query.to_lowercase())
}

/// First matching keyword, scanning categories and then keywords in order.
pub fn classify(query: &str, rules: &RuleSet) -> FilterVerdict {
    let text = query.to_lowercase();
    for (category, keywords) in &rules.categories {
        if let Some(kw) = keywords.iter().find(|k| k.matches(&text)) {
            return FilterVerdict {
                has_intent: false,
                matched_category: Some(category.clone()),
                matched_keyword: Some(kw.pattern().to_string()),
            };
        }
    }
    FilterVerdict {
        has_intent: true,
        matched_category: None,
        matched_keyword: None,
    }
}

/// Percentages, with `has_intent = true` as the positive class. Undefined
/// ratios (no predicted or no gold positives) are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

pub fn evaluate_filter(verdicts: &[FilterVerdict], gold: &[bool]) -> Result<FilterMetrics> {
    if verdicts.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: verdicts.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("filter evaluation"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (v, &g) in verdicts.iter().zip(gold) {
        match (v.has_intent, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(FilterMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
    })
}

//! Code question answering accuracy, code search MRR and the code-component
//! ablation harness.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coclr::{train, TrainConfig, Validation};
use crate::corpus::{Corpus, Example};
use crate::error::{Error, Result};
use crate::matcher::Score;
use crate::pyfunc::{strip_components, CodeFunction, ComponentMask};

/// Number of top-ranked code ids kept per [`SearchResult`].
pub const TOP_K: usize = 10;

/// Anything that can score a query against a set of codes.
pub trait MatchScorer: Sync {
    type Index: Sync;

    fn index_codes(&self, codes: &[&str]) -> Result<Self::Index>;

    fn score_codes(&self, index: &Self::Index, query: &str) -> Result<Vec<Score>>;

    fn score_one(&self, query: &str, code: &str) -> Result<Score> {
        let index = self.index_codes(&[code])?;
        Ok(self.score_codes(&index, query)?[0])
    }
}

/// Fixed, ordered search pool. Order breaks score ties.
#[derive(Debug, Clone, Default)]
pub struct CodeBase {
    ids: Vec<String>,
    texts: Vec<String>,
    position: HashMap<String, usize>,
}

impl CodeBase {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut cb = CodeBase::default();
        for (id, text) in entries {
            if cb.position.insert(id.clone(), cb.ids.len()).is_some() {
                return Err(Error::Integrity(format!("code_id `{id}` appears twice in codebase")));
            }
            cb.ids.push(id);
            cb.texts.push(text);
        }
        Ok(cb)
    }

    /// Renders each function with `mask`.
    pub fn from_functions<'a>(
        funcs: impl IntoIterator<Item = &'a CodeFunction>,
        mask: ComponentMask,
    ) -> Result<Self> {
        let entries = funcs
            .into_iter()
            .map(|f| Ok((f.code_id.clone(), strip_components(f, mask)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, code_id: &str) -> Option<usize> {
        self.position.get(code_id).copied()
    }

    pub fn id(&self, pos: usize) -> &str {
        &self.ids[pos]
    }

    pub fn texts(&self) -> Vec<&str> {
        self.texts.iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub query_id: String,
    pub text: String,
    pub gold_code_id: String,
}

impl SearchQuery {
    /// One query per positive pair of `corpus`; negatives are skipped.
    pub fn from_corpus(corpus: &Corpus) -> Vec<SearchQuery> {
        corpus
            .pairs
            .iter()
            .filter(|p| p.label == 1)
            .map(|p| SearchQuery {
                query_id: p.query_id.clone(),
                text: corpus.query(p).text.clone(),
                gold_code_id: p.code_id.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query_id: String,
    /// Best-first prefix of the full ranking.
    pub ranked: Vec<String>,
    /// 1-based.
    pub rank_of_gold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub mrr: f64,
    pub results: Vec<SearchResult>,
}

/// Orders codebase positions best-first: higher logit, then earlier position.
fn compare(scores: &[Score], a: usize, b: usize) -> Ordering {
    scores[b]
        .logit
        .partial_cmp(&scores[a].logit)
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Rank of position `gold` without sorting: one plus the number of codes that
/// would be ordered before it.
pub fn rank_of(scores: &[Score], gold: usize) -> usize {
    let g = scores[gold].logit;
    1 + scores
        .iter()
        .enumerate()
        .filter(|(i, s)| s.logit > g || (s.logit == g && *i < gold))
        .count()
}

fn top_positions(scores: &[Score], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |a, b| compare(scores, *a, *b));
        idx.truncate(k);
    }
    idx.sort_by(|a, b| compare(scores, *a, *b));
    idx
}

/// Ranks the whole codebase for every query; MRR is the mean reciprocal rank
/// of each query's gold code.
pub fn search_mrr<S: MatchScorer>(scorer: &S, queries: &[SearchQuery], codebase: &CodeBase) -> Result<SearchReport> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("search queries"));
    }
    if codebase.is_empty() {
        return Err(Error::EmptyInput("codebase"));
    }
    let gold: Vec<usize> = queries
        .iter()
        .map(|q| {
            codebase.position(&q.gold_code_id).ok_or_else(|| Error::GoldMissing {
                query_id: q.query_id.clone(),
                code_id: q.gold_code_id.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let index = scorer.index_codes(&codebase.texts())?;
    let results = queries
        .par_iter()
        .zip(gold.par_iter())
        .map(|(q, &g)| {
            let scores = scorer.score_codes(&index, &q.text)?;
            if scores.len() != codebase.len() {
                return Err(Error::LengthMismatch {
                    left: scores.len(),
                    right: codebase.len(),
                });
            }
            Ok(SearchResult {
                query_id: q.query_id.clone(),
                ranked: top_positions(&scores, TOP_K)
                    .into_iter()
                    .map(|p| codebase.id(p).to_string())
                    .collect(),
                rank_of_gold: rank_of(&scores, g),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mrr = results.iter().map(|r| 1.0 / r.rank_of_gold as f64).sum::<f64>() / results.len() as f64;
    Ok(SearchReport { mrr, results })
}

/// Fraction of pairs whose prediction `[s >= threshold]` equals the label.
pub fn qa_accuracy<S: MatchScorer>(scorer: &S, examples: &[Example], threshold: f64) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("QA pairs"));
    }
    let correct = examples
        .par_iter()
        .map(|ex| {
            let s = scorer.score_one(&ex.query, &ex.code)?;
            Ok(u8::from(s.prob() >= threshold) == ex.label)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|ok| *ok)
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub component: String,
    pub mask: ComponentMask,
    pub mrr: f64,
}

/// Retrains and re-evaluates once per mask, stripping the masked components
/// from every training code and every codebase entry.
pub fn ablation_run(
    config: &TrainConfig,
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    codebase: &[CodeFunction],
    masks: &[ComponentMask],
) -> Result<Vec<AblationRow>> {
    let queries = SearchQuery::from_corpus(test_corpus);
    masks
        .iter()
        .map(|mask| {
            if !mask.is_valid() {
                return Err(Error::EmptyMask);
            }
            let examples = train_corpus.examples(*mask)?;
            let cb = CodeBase::from_functions(codebase, *mask)?;
            let outcome = train(config, &examples, Validation::None)?;
            let report = search_mrr(&outcome.model, &queries, &cb)?;
            Ok(AblationRow {
                component: mask.label(),
                mask: *mask,
                mrr: report.mrr,
            })
        })
        .collect()
}

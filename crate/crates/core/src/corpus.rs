//! Data model, JSONL ingestion and split generation.
//!
//! One JSONL record per labeled pair:
//!
//! ```text
//! {"pair_id": "p1", "query": "python read file", "code": "def read(p):\n ...", "label": 1, "votes": [1, 1, 0]}
//! ```
//!
//! `query_id` and `code_id` are optional; when absent they are derived from a
//! content hash, so the same query or code text gets the same id across files.
//! `idx` and `doc` are accepted as aliases of `pair_id` and `query`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{tokenize, TokenKind};
use crate::error::{Error, Result};
use crate::pyfunc::{parse_function, strip_components, ComponentMask};

pub use crate::pyfunc::CodeFunction;

/// Minimum annotator count for a retained, annotated pair.
pub const MIN_VOTES: usize = 3;

/// `prefix_` followed by the first 16 hex digits of the SHA-256 of `text`.
pub fn content_id(prefix: &str, text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("{prefix}_{hex}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    /// Text as it appeared in the input.
    pub raw: String,
    /// Lowercased text.
    pub text: String,
    /// Content tokens (no `[CLS]`/`[SEP]`).
    pub tokens: Vec<String>,
}

impl Query {
    pub fn new(query_id: impl Into<String>, raw: &str) -> Result<Self> {
        let text = raw.to_lowercase();
        let tokens = tokenize(&text, TokenKind::Query).content().to_vec();
        if text.trim().is_empty() || tokens.is_empty() {
            return Err(Error::EmptyInput("query text has no tokens"));
        }
        Ok(Query {
            query_id: query_id.into(),
            raw: raw.to_string(),
            text,
            tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair_id: String,
    pub query_id: String,
    pub code_id: String,
    pub label: u8,
    #[serde(default)]
    pub votes: Vec<u8>,
}

/// Wire form of one JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    #[serde(alias = "idx")]
    pub pair_id: String,
    #[serde(alias = "doc")]
    pub query: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub votes: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_id: Option<String>,
}

/// Pairs plus the query and code stores they reference.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub queries: IndexMap<String, Query>,
    pub codes: IndexMap<String, CodeFunction>,
    pub pairs: Vec<LabeledPair>,
    pair_ids: HashSet<String>,
}

/// A pair with both sides rendered to text, ready for tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub pair_id: String,
    pub query_id: String,
    pub code_id: String,
    pub query: String,
    pub code: String,
    pub label: u8,
}

impl Corpus {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn query(&self, pair: &LabeledPair) -> &Query {
        &self.queries[&pair.query_id]
    }

    pub fn code(&self, pair: &LabeledPair) -> &CodeFunction {
        &self.codes[&pair.code_id]
    }

    /// Adds a record, enforcing pair-id uniqueness and id/text consistency.
    /// `line` is only used for error messages.
    pub fn insert_record(&mut self, record: PairRecord, line: usize, require_label: bool) -> Result<()> {
        let label = match record.label {
            Some(l @ (0 | 1)) => l,
            Some(other) => {
                return Err(Error::MalformedRecord {
                    line,
                    message: format!("label must be 0 or 1, got {other}"),
                })
            }
            None if require_label => {
                return Err(Error::MalformedRecord {
                    line,
                    message: "missing field `label`".into(),
                })
            }
            None => 0,
        };
        if let Some(v) = record.votes.iter().find(|v| **v > 1) {
            return Err(Error::MalformedRecord {
                line,
                message: format!("votes must be 0 or 1, got {v}"),
            });
        }
        if require_label && !record.votes.is_empty() && record.votes.len() < MIN_VOTES {
            return Err(Error::MalformedRecord {
                line,
                message: format!(
                    "annotated pair has {} votes, at least {MIN_VOTES} required",
                    record.votes.len()
                ),
            });
        }
        if self.pair_ids.contains(&record.pair_id) {
            return Err(Error::DuplicatePairId {
                line,
                pair_id: record.pair_id,
            });
        }

        let query_id = record
            .query_id
            .clone()
            .unwrap_or_else(|| content_id("q", &record.query.to_lowercase()));
        match self.queries.get(&query_id) {
            Some(existing) if existing.text != record.query.to_lowercase() => {
                return Err(Error::Integrity(format!(
                    "line {line}: query_id `{query_id}` refers to two different texts"
                )))
            }
            Some(_) => {}
            None => {
                let query = Query::new(query_id.clone(), &record.query).map_err(|e| {
                    Error::MalformedRecord {
                        line,
                        message: e.to_string(),
                    }
                })?;
                self.queries.insert(query_id.clone(), query);
            }
        }

        let code_id = record
            .code_id
            .clone()
            .unwrap_or_else(|| content_id("c", &record.code));
        match self.codes.get(&code_id) {
            Some(existing) if existing.raw_text() != record.code => {
                return Err(Error::Integrity(format!(
                    "line {line}: code_id `{code_id}` refers to two different functions"
                )))
            }
            Some(_) => {}
            None => {
                let func = parse_function(&record.code)
                    .map_err(|source| Error::FunctionParse { line, source })?
                    .with_id(code_id.clone());
                self.codes.insert(code_id.clone(), func);
            }
        }

        self.pair_ids.insert(record.pair_id.clone());
        self.pairs.push(LabeledPair {
            pair_id: record.pair_id,
            query_id,
            code_id,
            label,
            votes: record.votes,
        });
        Ok(())
    }

    pub fn to_record(&self, pair: &LabeledPair) -> PairRecord {
        PairRecord {
            pair_id: pair.pair_id.clone(),
            query: self.query(pair).raw.clone(),
            code: self.code(pair).raw_text().to_string(),
            label: Some(pair.label),
            votes: pair.votes.clone(),
            query_id: Some(pair.query_id.clone()),
            code_id: Some(pair.code_id.clone()),
        }
    }

    /// A corpus holding only `pairs`, with stores trimmed to what they reference.
    pub fn subset(&self, pairs: &[LabeledPair]) -> Corpus {
        let mut out = Corpus::default();
        for p in pairs {
            out.queries
                .entry(p.query_id.clone())
                .or_insert_with(|| self.queries[&p.query_id].clone());
            out.codes
                .entry(p.code_id.clone())
                .or_insert_with(|| self.codes[&p.code_id].clone());
            out.pair_ids.insert(p.pair_id.clone());
            out.pairs.push(p.clone());
        }
        out
    }

    /// Renders every pair with the code reduced to the components in `mask`.
    pub fn examples(&self, mask: ComponentMask) -> Result<Vec<Example>> {
        self.pairs
            .iter()
            .map(|p| {
                Ok(Example {
                    pair_id: p.pair_id.clone(),
                    query_id: p.query_id.clone(),
                    code_id: p.code_id.clone(),
                    query: self.query(p).text.clone(),
                    code: strip_components(self.code(p), mask)?,
                    label: p.label,
                })
            })
            .collect()
    }
}

/// Reads a labeled JSONL corpus.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(BufReader::new(file), true)
}

/// Reads candidate pairs, where `label` may be absent.
pub fn load_candidates(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(BufReader::new(file), false)
}

pub fn read_pairs(reader: impl BufRead, require_label: bool) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        corpus.insert_record(record, line_no, require_label)?;
    }
    Ok(corpus)
}

pub fn write_pairs(corpus: &Corpus, pairs: &[LabeledPair], writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for p in pairs {
        serde_json::to_writer(&mut w, &corpus.to_record(p))?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn save_pairs(corpus: &Corpus, pairs: &[LabeledPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pairs(corpus, pairs, file)
}

/// Unpaired query line: `{"query_id": "...", "query": "..."}`; the id is optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(alias = "doc")]
    pub query: String,
}

impl QueryRecord {
    pub fn id(&self) -> String {
        self.query_id
            .clone()
            .unwrap_or_else(|| content_id("q", &self.query.to_lowercase()))
    }
}

/// Unpaired code line: `{"code_id": "...", "code": "def ..."}`; the id is optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_id: Option<String>,
    pub code: String,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, rec));
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    Ok(read_jsonl(path.as_ref())?.into_iter().map(|(_, r)| r).collect())
}

pub fn save_queries(records: &[QueryRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path.as_ref(), records)
}

/// Parses every code line; ids must be unique.
pub fn load_codes(path: impl AsRef<Path>) -> Result<Vec<CodeFunction>> {
    let mut seen = HashSet::new();
    read_jsonl::<CodeRecord>(path.as_ref())?
        .into_iter()
        .map(|(line, rec)| {
            let id = rec.code_id.unwrap_or_else(|| content_id("c", &rec.code));
            if !seen.insert(id.clone()) {
                return Err(Error::Integrity(format!("line {line}: code_id `{id}` appears twice")));
            }
            Ok(parse_function(&rec.code)
                .map_err(|source| Error::FunctionParse { line, source })?
                .with_id(id))
        })
        .collect()
}

pub fn save_codes(codes: &[CodeFunction], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        codes.iter().map(|c| CodeRecord {
            code_id: Some(c.code_id.clone()),
            code: c.raw_text().to_string(),
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Qa,
    Search,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qa" => Ok(Task::Qa),
            "search" => Ok(Task::Search),
            other => Err(Error::Config(format!("unknown task `{other}` (expected qa|search)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub task: Task,
    pub seed: u64,
    /// `[train, valid]` for QA, `[train, valid, test]` for search.
    pub counts: Vec<usize>,
}

impl SplitSpec {
    /// 20,000 train / 604 validation.
    pub fn full_qa(seed: u64) -> Self {
        SplitSpec {
            task: Task::Qa,
            seed,
            counts: vec![20_000, 604],
        }
    }

    /// 19,604 / 500 / 500 with all-positive validation and test.
    pub fn full_search(seed: u64) -> Self {
        SplitSpec {
            task: Task::Search,
            seed,
            counts: vec![19_604, 500, 500],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<LabeledPair>,
    pub valid: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

pub fn make_splits(pairs: &[LabeledPair], spec: &SplitSpec) -> Result<Splits> {
    let expected_parts = match spec.task {
        Task::Qa => 2,
        Task::Search => 3,
    };
    if spec.counts.len() != expected_parts {
        return Err(Error::InvalidSplit(format!(
            "{:?} split needs {expected_parts} partition sizes, got {}",
            spec.task,
            spec.counts.len()
        )));
    }
    let total: usize = spec.counts.iter().sum();
    if total != pairs.len() {
        return Err(Error::InvalidSplit(format!(
            "partition sizes sum to {total} but there are {} pairs",
            pairs.len()
        )));
    }

    let mut order: Vec<&LabeledPair> = pairs.iter().collect();
    order.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    match spec.task {
        Task::Qa => {
            let (train, valid) = order.split_at(spec.counts[0]);
            Ok(Splits {
                train: train.iter().map(|p| (*p).clone()).collect(),
                valid: valid.iter().map(|p| (*p).clone()).collect(),
                test: Vec::new(),
            })
        }
        Task::Search => {
            let needed = spec.counts[1] + spec.counts[2];
            let positives: Vec<usize> = order
                .iter()
                .enumerate()
                .filter(|(_, p)| p.label == 1)
                .map(|(i, _)| i)
                .take(needed)
                .collect();
            if positives.len() < needed {
                let available = order.iter().filter(|p| p.label == 1).count();
                return Err(Error::InsufficientPositives { needed, available });
            }
            let valid_idx: HashSet<usize> = positives[..spec.counts[1]].iter().copied().collect();
            let test_idx: HashSet<usize> = positives[spec.counts[1]..].iter().copied().collect();
            let mut splits = Splits::default();
            for (i, p) in order.into_iter().enumerate() {
                let dest = if valid_idx.contains(&i) {
                    &mut splits.valid
                } else if test_idx.contains(&i) {
                    &mut splits.test
                } else {
                    &mut splits.train
                };
                dest.push(p.clone());
            }
            Ok(splits)
        }
    }
}

/// Corpus-level counts; token lengths exclude `[CLS]`/`[SEP]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_pairs: usize,
    pub n_unique_queries: usize,
    pub n_unique_codes: usize,
    /// Mean query length over pairs.
    pub avg_query_len: f64,
    /// Mean code length over unique codes.
    pub avg_code_len: f64,
    pub query_vocab_size: usize,
    pub code_vocab_size: usize,
}

pub fn stats(corpus: &Corpus) -> CorpusStats {
    if corpus.pairs.is_empty() {
        return CorpusStats::default();
    }
    let mut query_vocab = HashSet::new();
    let mut query_tokens = 0usize;
    let mut query_ids = HashSet::new();
    for p in &corpus.pairs {
        let q = corpus.query(p);
        query_tokens += q.tokens.len();
        query_vocab.extend(q.tokens.iter().map(String::as_str));
        query_ids.insert(&p.query_id);
    }

    let mut code_lens: HashMap<&str, usize> = HashMap::new();
    let mut code_vocab: HashSet<String> = HashSet::new();
    for p in &corpus.pairs {
        if code_lens.contains_key(p.code_id.as_str()) {
            continue;
        }
        let toks = tokenize(corpus.code(p).raw_text(), TokenKind::Code);
        code_lens.insert(&p.code_id, toks.content().len());
        code_vocab.extend(toks.content().iter().cloned());
    }

    CorpusStats {
        n_pairs: corpus.pairs.len(),
        n_unique_queries: query_ids.len(),
        n_unique_codes: code_lens.len(),
        avg_query_len: query_tokens as f64 / corpus.pairs.len() as f64,
        avg_code_len: code_lens.values().sum::<usize>() as f64 / code_lens.len() as f64,
        query_vocab_size: query_vocab.len(),
        code_vocab_size: code_vocab.len(),
    }
}

//! Synthetic query-code corpus with a known matching signal.
//!
//! Every code carries a few "concept" pseudo-words in its docstring (and
//! optionally its function name). A positive query names two or three of its
//! code's concepts; a negative pairs that query with a code sharing none of
//! them. Everything else in the code is filler drawn from a small shared
//! vocabulary.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{save_codes, Corpus, PairRecord};
use crate::error::{Error, Result};
use crate::pyfunc::{parse_function, CodeFunction};

const SYLLABLES: [&str; 16] = [
    "ba", "ko", "ri", "mu", "te", "za", "lo", "ni", "fe", "qu", "si", "da", "vo", "xi", "pe", "ju",
];

const NAME_FILLER: [&str; 12] = [
    "get", "set", "load", "make", "run", "build", "apply", "update", "handle", "compute", "parse", "emit",
];

const ARG_FILLER: [&str; 10] = ["data", "value", "item", "node", "key", "obj", "buf", "path", "size", "opts"];

const DOC_FILLER: [&str; 8] = ["helper", "utility", "routine", "wrapper", "function", "method", "step", "logic"];

const METHODS: [&str; 8] = ["get", "append", "update", "pop", "copy", "split", "join", "strip"];

const QUERY_PREFIX: [&str; 4] = ["", "how to", "get", "find"];

/// Where concept words appear in generated code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalPlacement {
    /// Docstring only.
    Docstring,
    /// Docstring, plus the first concept in the function name.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// Fraction of training pairs labeled 1.
    pub positive_fraction: f64,
    pub n_concepts: usize,
    pub concepts_per_code: usize,
    pub placement: SignalPlacement,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            n_train: 2000,
            n_valid: 100,
            n_test: 200,
            positive_fraction: 0.5,
            n_concepts: 240,
            concepts_per_code: 3,
            placement: SignalPlacement::Mixed,
        }
    }
}

/// `train` mixes labels; `valid` and `test` are all positive. `codebase`
/// holds every generated code.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Corpus,
    pub valid: Corpus,
    pub test: Corpus,
    pub codebase: Vec<CodeFunction>,
}

pub fn concept_words(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let s = SYLLABLES.len();
            format!("{}{}{}n", SYLLABLES[i / s % s], SYLLABLES[i % s], SYLLABLES[(i / (s * s)) % s])
        })
        .collect()
}

struct SynthCode {
    concepts: Vec<usize>,
    text: String,
}

fn make_code(concepts: Vec<usize>, words: &[String], placement: SignalPlacement, rng: &mut ChaCha8Rng) -> SynthCode {
    let verb = NAME_FILLER.choose(rng).expect("non-empty");
    let noun = match placement {
        SignalPlacement::Mixed => words[concepts[0]].as_str(),
        SignalPlacement::Docstring => ARG_FILLER.choose(rng).expect("non-empty"),
    };
    let a = ARG_FILLER.choose(rng).expect("non-empty");
    let mut b = ARG_FILLER.choose(rng).expect("non-empty");
    while b == a {
        b = ARG_FILLER.choose(rng).expect("non-empty");
    }
    let mut doc: Vec<&str> = concepts.iter().map(|&c| words[c].as_str()).collect();
    doc.push(DOC_FILLER.choose(rng).expect("non-empty"));
    doc.shuffle(rng);
    let method = METHODS.choose(rng).expect("non-empty");
    let text = format!(
        "def {verb}_{noun}({a}, {b}):\n    \"\"\"{}.\"\"\"\n    result = {a}.{method}({b})\n    return result",
        doc.join(" ")
    );
    SynthCode { concepts, text }
}

fn make_query(code: &SynthCode, words: &[String], rng: &mut ChaCha8Rng) -> String {
    let k = rng.random_range(2..=code.concepts.len().max(2)).min(code.concepts.len());
    let mut picked: Vec<&str> = code
        .concepts
        .choose_multiple(rng, k)
        .map(|&c| words[c].as_str())
        .collect();
    picked.shuffle(rng);
    let prefix = QUERY_PREFIX.choose(rng).expect("non-empty");
    let mut parts = vec!["python"];
    if !prefix.is_empty() {
        parts.push(prefix);
    }
    parts.extend(picked);
    parts.join(" ")
}

fn shares_concept(a: &SynthCode, b: &SynthCode) -> bool {
    a.concepts.iter().any(|c| b.concepts.contains(c))
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.concepts_per_code < 2 || config.n_concepts < 2 * config.concepts_per_code {
        return Err(Error::Config(format!(
            "need >= 2 concepts per code and >= {} concepts, got {} and {}",
            2 * config.concepts_per_code,
            config.concepts_per_code,
            config.n_concepts
        )));
    }
    if !(0.0..=1.0).contains(&config.positive_fraction) {
        return Err(Error::Config("positive_fraction must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let words = concept_words(config.n_concepts);
    let n_pos = (config.n_train as f64 * config.positive_fraction).round() as usize;
    let n_neg = config.n_train - n_pos;
    // one fresh code per positive, plus a pool for negatives when there are no positives
    let n_train_codes = n_pos.max(usize::from(n_neg > 0) * 2);
    let n_codes = n_train_codes + config.n_valid + config.n_test;

    let all: Vec<usize> = (0..config.n_concepts).collect();
    let codes: Vec<SynthCode> = (0..n_codes)
        .map(|_| {
            let concepts = all.choose_multiple(&mut rng, config.concepts_per_code).copied().collect();
            make_code(concepts, &words, config.placement, &mut rng)
        })
        .collect();

    let mut train = Vec::with_capacity(config.n_train);
    for (k, code) in codes[..n_pos].iter().enumerate() {
        train.push((format!("synth-train-{k:05}-pos"), make_query(code, &words, &mut rng), k, 1u8));
    }
    for k in 0..n_neg {
        let src = rng.random_range(0..n_train_codes);
        let query = make_query(&codes[src], &words, &mut rng);
        let mut tries = 0;
        let dst = loop {
            let j = rng.random_range(0..n_train_codes);
            if !shares_concept(&codes[src], &codes[j]) {
                break j;
            }
            tries += 1;
            if tries > 10_000 {
                return Err(Error::Config("could not find a concept-disjoint negative".into()));
            }
        };
        train.push((format!("synth-train-{k:05}-neg"), query, dst, 0u8));
    }
    train.shuffle(&mut rng);

    let build = |items: Vec<(String, String, usize, u8)>| -> Result<Corpus> {
        let mut corpus = Corpus::default();
        for (line, (pair_id, query, code, label)) in items.into_iter().enumerate() {
            corpus.insert_record(
                PairRecord {
                    pair_id,
                    query,
                    code: codes[code].text.clone(),
                    label: Some(label),
                    votes: Vec::new(),
                    query_id: None,
                    code_id: None,
                },
                line + 1,
                true,
            )?;
        }
        Ok(corpus)
    };

    let mut held_out = |start: usize, n: usize, tag: &str| {
        (start..start + n)
            .map(|k| (format!("synth-{tag}-{:05}", k - start), make_query(&codes[k], &words, &mut rng), k, 1u8))
            .collect::<Vec<_>>()
    };
    let valid = held_out(n_train_codes, config.n_valid, "valid");
    let test = held_out(n_train_codes + config.n_valid, config.n_test, "test");

    let codebase = codes
        .iter()
        .map(|c| {
            parse_function(&c.text)
                .map(|f| {
                    let id = crate::corpus::content_id("c", &c.text);
                    f.with_id(id)
                })
                .map_err(|source| Error::FunctionParse { line: 0, source })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::HashSet::new();
    let codebase: Vec<CodeFunction> = codebase.into_iter().filter(|f| seen.insert(f.code_id.clone())).collect();

    Ok(SynthCorpus {
        train: build(train)?,
        valid: build(valid)?,
        test: build(test)?,
        codebase,
    })
}

impl SynthCorpus {
    /// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl` and `codebase.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, corpus) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            crate::corpus::save_pairs(corpus, &corpus.pairs, dir.join(format!("{name}.jsonl")))?;
        }
        save_codes(&self.codebase, dir.join("codebase.jsonl"))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::encoder::{tokenize, TokenKind};

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 200,
            n_valid: 10,
            n_test: 20,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn concept_words_are_distinct() {
        let w = concept_words(240);
        assert_eq!(w.iter().collect::<HashSet<_>>().len(), 240);
    }

    #[test]
    fn sizes_and_labels() {
        let s = generate(&small()).unwrap();
        assert_eq!(s.train.len(), 200);
        assert_eq!(s.train.pairs.iter().filter(|p| p.label == 1).count(), 100);
        assert_eq!(s.valid.len(), 10);
        assert_eq!(s.test.len(), 20);
        assert!(s.test.pairs.iter().all(|p| p.label == 1));
        let ids: HashSet<&str> = s.codebase.iter().map(|c| c.code_id.as_str()).collect();
        assert!(s.test.pairs.iter().all(|p| ids.contains(p.code_id.as_str())));
    }

    #[test]
    fn overlap_separates_labels() {
        let s = generate(&small()).unwrap();
        let concepts: HashSet<String> = concept_words(240).into_iter().collect();
        for p in &s.train.pairs {
            let q: HashSet<String> = s.train.query(p).tokens.iter().cloned().collect();
            let doc: HashSet<String> = tokenize(s.train.code(p).docstring(), TokenKind::Code)
                .content()
                .iter()
                .filter(|t| concepts.contains(*t))
                .cloned()
                .collect();
            let shared = q.intersection(&doc).count();
            if p.label == 1 {
                assert!(shared >= 2, "{p:?}");
            } else {
                assert_eq!(shared, 0, "{p:?}");
            }
        }
    }

    #[test]
    fn docstring_placement_keeps_concepts_out_of_header() {
        let cfg = SynthConfig {
            placement: SignalPlacement::Docstring,
            ..small()
        };
        let s = generate(&cfg).unwrap();
        let concepts: HashSet<String> = concept_words(240).into_iter().collect();
        for f in &s.codebase {
            let header = tokenize(f.header(), TokenKind::Code);
            assert!(header.content().iter().all(|t| !concepts.contains(t)));
        }
    }

    #[test]
    fn seeded() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.train.pairs, b.train.pairs);
        let c = generate(&SynthConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.train.pairs, c.train.pairs);
    }
}

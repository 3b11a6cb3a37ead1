//! Encoder + relation head bundled with its vocabulary, and the checkpoint
//! file format.
//!
//! Checkpoints are a single JSON document:
//!
//! ```text
//! {
//!   "magic": "QCMATCH-CKPT",
//!   "version": 1,
//!   "dim": d,
//!   "vocab_size": |V|,
//!   "max_query_len": 64,
//!   "max_code_len": 256,
//!   "vocab": ["[PAD]", "[UNK]", "[CLS]", "[SEP]", ...],      // |V| tokens
//!   "encoder": [...],   // |V|·d embedding table (row-major) then d·d projection
//!   "matcher": [...]    // d·4d W1 (row-major) then d W2
//! }
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{tokenize_truncated, BagEncoder, Encoder, TokenKind, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::MatchScorer;
use crate::matcher::{CodeIndex, Matcher, Score};

pub const CHECKPOINT_MAGIC: &str = "QCMATCH-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dim: usize,
    pub max_query_len: usize,
    pub max_code_len: usize,
    /// Tokens seen fewer times in the training split map to `[UNK]`.
    pub min_freq: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 128,
            max_query_len: 64,
            max_code_len: 256,
            min_freq: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel<E = BagEncoder> {
    pub vocab: Vocabulary,
    pub encoder: E,
    pub matcher: Matcher,
    pub config: ModelConfig,
}

impl SiameseModel<BagEncoder> {
    /// Fresh parameters; the encoder is initialised before the matcher from
    /// one seeded stream.
    pub fn init(vocab: Vocabulary, config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = BagEncoder::init(vocab.len(), config.dim, &mut rng)?;
        let matcher = Matcher::init(config.dim, &mut rng)?;
        Ok(SiameseModel {
            vocab,
            encoder,
            matcher,
            config,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            magic: CHECKPOINT_MAGIC.to_string(),
            version: CHECKPOINT_VERSION,
            dim: self.config.dim,
            vocab_size: self.vocab.len(),
            max_query_len: self.config.max_query_len,
            max_code_len: self.config.max_code_len,
            min_freq: self.config.min_freq,
            vocab: self.vocab.tokens().to_vec(),
            encoder: self.encoder.params().to_vec(),
            matcher: self.matcher.params().to_vec(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic `{}`", ckpt.magic)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        if ckpt.vocab.len() != ckpt.vocab_size {
            return Err(Error::Checkpoint(format!(
                "header says {} tokens, vocabulary has {}",
                ckpt.vocab_size,
                ckpt.vocab.len()
            )));
        }
        let vocab = Vocabulary::from_tokens(ckpt.vocab)?;
        let encoder = BagEncoder::from_flat(ckpt.vocab_size, ckpt.dim, ckpt.encoder)?;
        let matcher = Matcher::from_flat(ckpt.dim, ckpt.matcher)?;
        Ok(SiameseModel {
            vocab,
            encoder,
            matcher,
            config: ModelConfig {
                dim: ckpt.dim,
                max_query_len: ckpt.max_query_len,
                max_code_len: ckpt.max_code_len,
                min_freq: ckpt.min_freq,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

impl<E: Encoder> SiameseModel<E> {
    pub fn query_ids(&self, text: &str) -> Vec<usize> {
        let toks = tokenize_truncated(&text.to_lowercase(), TokenKind::Query, self.config.max_query_len);
        self.vocab.ids(toks.all())
    }

    pub fn code_ids(&self, text: &str) -> Vec<usize> {
        let toks = tokenize_truncated(text, TokenKind::Code, self.config.max_code_len);
        self.vocab.ids(toks.all())
    }

    pub fn embed_query(&self, text: &str) -> Result<Array1<f64>> {
        self.encoder.encode(&self.query_ids(text))
    }

    pub fn embed_code(&self, text: &str) -> Result<Array1<f64>> {
        self.encoder.encode(&self.code_ids(text))
    }

    pub fn score_pair(&self, query: &str, code: &str) -> Result<Score> {
        let q = self.embed_query(query)?;
        let c = self.embed_code(code)?;
        let rel = self.matcher.relation(q.view(), c.view())?;
        self.matcher.score(&rel)
    }
}

impl<E: Encoder + Sync> MatchScorer for SiameseModel<E> {
    type Index = CodeIndex;

    fn index_codes(&self, codes: &[&str]) -> Result<CodeIndex> {
        let embedded = codes
            .iter()
            .map(|c| self.embed_code(c))
            .collect::<Result<Vec<_>>>()?;
        self.matcher.index_codes(&embedded)
    }

    fn score_codes(&self, index: &CodeIndex, query: &str) -> Result<Vec<Score>> {
        let q = self.embed_query(query)?;
        Ok(self
            .matcher
            .score_against(index, q.view())?
            .into_iter()
            .map(Score::from_logit)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub dim: usize,
    pub vocab_size: usize,
    pub max_query_len: usize,
    pub max_code_len: usize,
    pub min_freq: usize,
    pub vocab: Vec<String>,
    pub encoder: Vec<f64>,
    pub matcher: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> SiameseModel {
        let seqs = vec![vec!["read".to_string(), "file".to_string()]; 2];
        let vocab = Vocabulary::build(seqs.iter(), 2);
        SiameseModel::init(
            vocab,
            ModelConfig {
                dim: 4,
                ..ModelConfig::default()
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = SiameseModel::load(&path).unwrap();
        assert_eq!(back.encoder, model.encoder);
        assert_eq!(back.matcher.params(), model.matcher.params());
        assert_eq!(back.vocab, model.vocab);
        let first = fs::read(&path).unwrap();
        back.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn checkpoint_header_is_validated() {
        let mut ckpt = small_model().to_checkpoint();
        ckpt.magic = "nope".into();
        assert!(SiameseModel::from_checkpoint(ckpt).is_err());
        let mut ckpt = small_model().to_checkpoint();
        ckpt.vocab_size += 1;
        assert!(SiameseModel::from_checkpoint(ckpt).is_err());
        let mut ckpt = small_model().to_checkpoint();
        ckpt.encoder.pop();
        assert!(SiameseModel::from_checkpoint(ckpt).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        assert_eq!(small_model(), small_model());
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let m = small_model();
        let ids = m.query_ids("Read zebra");
        assert_eq!(ids, [crate::encoder::CLS_ID, m.vocab.id("read"), crate::encoder::UNK_ID, crate::encoder::SEP_ID]);
        assert!(m.score_pair("read zebra", "def f(): pass").unwrap().prob() > 0.0);
    }
}

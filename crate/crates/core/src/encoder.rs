//! Tokenization and the sequence-to-vector encoder.
//!
//! [`Encoder`] is the seam where a pretrained model can be plugged in. The
//! bundled [`BagEncoder`] mean-pools token embeddings and passes the result
//! through a tanh projection:
//!
//! ```text
//! v = tanh(P · mean(E[t] for t in tokens))
//! ```
//!
//! Parameters live in one flat buffer (embedding table first, row-major,
//! then the projection) so the optimizer and gradient checks can treat every
//! encoder uniformly.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Query,
    Code,
}

/// A token sequence wrapped in `[CLS]` … `[SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokens(Vec<String>);

impl Tokens {
    pub fn all(&self) -> &[String] {
        &self.0
    }

    /// Tokens between `[CLS]` and `[SEP]`.
    pub fn content(&self) -> &[String] {
        &self.0[1..self.0.len() - 1]
    }

    pub fn from_content(content: impl IntoIterator<Item = String>) -> Self {
        let mut v = vec![CLS.to_string()];
        v.extend(content);
        v.push(SEP.to_string());
        Tokens(v)
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }
}

/// Lowercased word tokens; code additionally splits snake_case and camelCase.
pub fn tokenize(text: &str, kind: TokenKind) -> Tokens {
    Tokens::from_content(content_tokens(text, kind))
}

/// Like [`tokenize`] but keeps at most `max_len` tokens including the two
/// specials.
pub fn tokenize_truncated(text: &str, kind: TokenKind, max_len: usize) -> Tokens {
    let keep = max_len.saturating_sub(2);
    Tokens::from_content(content_tokens(text, kind).into_iter().take(keep))
}

fn content_tokens(text: &str, kind: TokenKind) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        if word.is_empty() {
            continue;
        }
        match kind {
            TokenKind::Query => out.push(word.to_lowercase()),
            TokenKind::Code => out.extend(split_camel(word).into_iter().map(|w| w.to_lowercase())),
        }
    }
    out
}

fn split_camel(word: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut parts = Vec::new();
    let mut start = 0;
    for k in 1..chars.len() {
        let (idx, cur) = chars[k];
        let prev = chars[k - 1].1;
        let next_lower = chars.get(k + 1).is_some_and(|(_, c)| c.is_lowercase());
        let boundary = cur.is_uppercase()
            && (prev.is_lowercase() || prev.is_numeric() || (prev.is_uppercase() && next_lower));
        if boundary {
            parts.push(&word[start..idx]);
            start = idx;
        }
    }
    parts.push(&word[start..]);
    parts
}

/// Dense token ids with the four specials at ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_freq` times, ordered by descending
    /// frequency then lexicographically.
    pub fn build<'a, I, S>(sequences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a String>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in sequences {
            for t in seq {
                if !SPECIALS.contains(&t.as_str()) {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens).expect("specials are placed first")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Checkpoint(format!(
                "vocabulary must start with {SPECIALS:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Checkpoint(format!("token `{t}` appears twice in vocabulary")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A trainable map from token ids to a fixed-size vector.
pub trait Encoder {
    fn dim(&self) -> usize;

    fn encode(&self, ids: &[usize]) -> Result<Array1<f64>>;

    /// Adds `upstream · ∂encode(ids)/∂params` into `grad`, which is laid out
    /// like [`Encoder::params`].
    fn accumulate_gradient(&self, ids: &[usize], upstream: ArrayView1<f64>, grad: &mut [f64]) -> Result<()>;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];
}

/// Mean-pooled token embeddings through a tanh projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BagEncoder {
    vocab_size: usize,
    dim: usize,
    params: Vec<f64>,
}

/// Sparse gradient of one [`BagEncoder::encode`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradient {
    /// `(token id, gradient row)` for every distinct id that was used.
    pub rows: Vec<(usize, Array1<f64>)>,
    pub projection: Array2<f64>,
}

impl BagEncoder {
    pub fn init(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("embedding dimension must be >= 2, got {dim}")));
        }
        let emb_bound = (3.0 / dim as f64).sqrt();
        let proj_bound = (6.0 / (2 * dim) as f64).sqrt();
        let mut params = Vec::with_capacity(vocab_size * dim + dim * dim);
        params.extend((0..vocab_size * dim).map(|_| rng.random_range(-emb_bound..emb_bound)));
        params.extend((0..dim * dim).map(|_| rng.random_range(-proj_bound..proj_bound)));
        Ok(BagEncoder {
            vocab_size,
            dim,
            params,
        })
    }

    pub fn from_parts(embedding: Array2<f64>, projection: Array2<f64>) -> Result<Self> {
        let (vocab_size, dim) = embedding.dim();
        if projection.dim() != (dim, dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: projection.nrows(),
            });
        }
        if dim < 2 {
            return Err(Error::Config(format!("embedding dimension must be >= 2, got {dim}")));
        }
        let mut params: Vec<f64> = embedding.iter().copied().collect();
        params.extend(projection.iter().copied());
        Self::from_flat(vocab_size, dim, params)
    }

    pub fn from_flat(vocab_size: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        let want = vocab_size * dim + dim * dim;
        if params.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                what: "encoder parameter".into(),
            });
        }
        Ok(BagEncoder {
            vocab_size,
            dim,
            params,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn embedding(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.vocab_size, self.dim), &self.params[..self.vocab_size * self.dim])
            .expect("layout checked at construction")
    }

    pub fn projection(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.dim, self.dim), &self.params[self.vocab_size * self.dim..])
            .expect("layout checked at construction")
    }

    fn mean_embedding(&self, ids: &[usize]) -> Result<Array1<f64>> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("token sequence"));
        }
        let emb = self.embedding();
        let mut sum = Array1::<f64>::zeros(self.dim);
        for &id in ids {
            if id >= self.vocab_size {
                return Err(Error::UnknownTokenId {
                    id,
                    size: self.vocab_size,
                });
            }
            sum += &emb.row(id);
        }
        Ok(sum / ids.len() as f64)
    }

    pub fn encode_gradient(&self, ids: &[usize], upstream: ArrayView1<f64>) -> Result<EncoderGradient> {
        if upstream.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: upstream.len(),
            });
        }
        let mean = self.mean_embedding(ids)?;
        let proj = self.projection();
        let out = proj.dot(&mean).mapv(f64::tanh);
        let pre_grad = &upstream * &out.mapv(|v| 1.0 - v * v);
        let projection = outer(pre_grad.view(), mean.view());
        let mean_grad = proj.t().dot(&pre_grad);

        let mut counts: Vec<(usize, usize)> = Vec::new();
        for &id in ids {
            match counts.iter_mut().find(|(i, _)| *i == id) {
                Some((_, c)) => *c += 1,
                None => counts.push((id, 1)),
            }
        }
        let n = ids.len() as f64;
        let rows = counts
            .into_iter()
            .map(|(id, c)| (id, &mean_grad * (c as f64 / n)))
            .collect();
        Ok(EncoderGradient { rows, projection })
    }
}

impl Encoder for BagEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, ids: &[usize]) -> Result<Array1<f64>> {
        let mean = self.mean_embedding(ids)?;
        Ok(self.projection().dot(&mean).mapv(f64::tanh))
    }

    fn accumulate_gradient(&self, ids: &[usize], upstream: ArrayView1<f64>, grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let g = self.encode_gradient(ids, upstream)?;
        let d = self.dim;
        for (id, row) in &g.rows {
            for (dst, src) in grad[id * d..(id + 1) * d].iter_mut().zip(row.iter()) {
                *dst += src;
            }
        }
        let off = self.vocab_size * d;
        for (dst, src) in grad[off..].iter_mut().zip(g.projection.iter()) {
            *dst += src;
        }
        Ok(())
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

pub(crate) fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn strs(t: &Tokens) -> Vec<&str> {
        t.all().iter().map(String::as_str).collect()
    }

    #[test]
    fn query_tokenization() {
        let t = tokenize("python check if argument is list", TokenKind::Query);
        assert_eq!(strs(&t), ["[CLS]", "python", "check", "if", "argument", "is", "list", "[SEP]"]);
        let t = tokenize("Python: read/write a CSV-file?", TokenKind::Query);
        assert_eq!(t.content(), ["python", "read", "write", "a", "csv", "file"]);
        assert_eq!(strs(&tokenize("", TokenKind::Query)), ["[CLS]", "[SEP]"]);
    }

    #[test]
    fn code_tokenization_splits_identifiers() {
        let t = tokenize("is_string", TokenKind::Code);
        assert_eq!(t.content(), ["is", "string"]);
        let t = tokenize("def parseHTTPResponse(rawBody2Text):", TokenKind::Code);
        assert_eq!(t.content(), ["def", "parse", "http", "response", "raw", "body2", "text"]);
        // query kind keeps camelCase words whole
        let t = tokenize("isString", TokenKind::Query);
        assert_eq!(t.content(), ["isstring"]);
    }

    #[test]
    fn truncation_counts_specials() {
        let t = tokenize_truncated("a b c d e", TokenKind::Query, 4);
        assert_eq!(strs(&t), ["[CLS]", "a", "b", "[SEP]"]);
    }

    #[test]
    fn vocabulary_layout() {
        let seqs = [
            vec!["b".to_string(), "a".to_string(), "b".to_string()],
            vec!["a".to_string(), "c".to_string(), "[CLS]".to_string()],
        ];
        let v = Vocabulary::build(seqs.iter(), 2);
        assert_eq!(v.tokens(), ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "b"]);
        assert_eq!(v.id("c"), UNK_ID);
        assert_eq!(v.id("[SEP]"), SEP_ID);
        assert!(Vocabulary::from_tokens(vec!["x".into()]).is_err());
        let mut dup = v.tokens().to_vec();
        dup.push("a".into());
        assert!(Vocabulary::from_tokens(dup).is_err());
    }

    #[test]
    fn zero_table_encodes_to_zero() {
        let enc = BagEncoder::from_parts(Array2::zeros((5, 3)), Array2::eye(3)).unwrap();
        assert_eq!(enc.encode(&[0, 4, 2]).unwrap(), Array1::<f64>::zeros(3));
    }

    #[test]
    fn single_token_identity_projection() {
        let table = array![[0.3, -0.2], [1.5, 0.25]];
        let enc = BagEncoder::from_parts(table, Array2::eye(2)).unwrap();
        let v = enc.encode(&[1]).unwrap();
        assert_eq!(v, array![1.5f64.tanh(), 0.25f64.tanh()]);
    }

    #[test]
    fn two_tokens_by_hand() {
        // mean = ([1, 2] + [3, -2]) / 2 = [2, 0]
        // P·mean = [[0.5, 1], [-1, 0.25]]·[2, 0] = [1, -2]
        let table = array![[1.0, 2.0], [3.0, -2.0], [9.0, 9.0]];
        let proj = array![[0.5, 1.0], [-1.0, 0.25]];
        let enc = BagEncoder::from_parts(table, proj).unwrap();
        let v = enc.encode(&[0, 1]).unwrap();
        assert!((v[0] - 1.0f64.tanh()).abs() < 1e-15);
        assert!((v[1] - (-2.0f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let enc = BagEncoder::from_parts(Array2::zeros((3, 2)), Array2::eye(2)).unwrap();
        assert!(matches!(enc.encode(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(enc.encode(&[3]), Err(Error::UnknownTokenId { id: 3, size: 3 })));
        assert!(matches!(
            enc.encode_gradient(&[0], array![1.0, 2.0, 3.0].view()),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(BagEncoder::from_parts(Array2::zeros((3, 1)), Array2::eye(1)).is_err());
    }

    #[test]
    fn zero_upstream_and_unused_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = BagEncoder::init(6, 4, &mut rng).unwrap();
        let g = enc.encode_gradient(&[1, 2, 2], Array1::zeros(4).view()).unwrap();
        assert!(g.projection.iter().all(|x| *x == 0.0));
        assert!(g.rows.iter().all(|(_, r)| r.iter().all(|x| *x == 0.0)));

        let mut flat = vec![0.0; enc.params().len()];
        enc.accumulate_gradient(&[1, 2, 2], array![0.3, -1.0, 0.5, 2.0].view(), &mut flat)
            .unwrap();
        for unused in [0usize, 3, 4, 5] {
            assert!(flat[unused * 4..unused * 4 + 4].iter().all(|x| *x == 0.0));
        }
        assert!(flat[4..8].iter().any(|x| *x != 0.0));
    }

    #[test]
    fn mean_pooling_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let enc = BagEncoder::init(10, 8, &mut rng).unwrap();
        let a = enc.encode(&[CLS_ID, 4, 5, 6, 7, SEP_ID]).unwrap();
        let b = enc.encode(&[CLS_ID, 7, 5, 4, 6, SEP_ID]).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

//! Contrastive training objective and loop.
//!
//! Per example `i` of a batch of `n`:
//!
//! ```text
//! L_b   = BCE(s_ii, y_i)
//! L_ib  = 1/(n−1) · Σ_{j≠i} −log(1 − s_ij)                 (in-batch codes as negatives)
//! L_qr  = BCE(s'_ii, 1) + 1/(n−1) · Σ_{j≠i} −log(1 − s'_ij) (rewritten query q'_i, y_i = 1 only)
//! L     = mean_i (L_b + L_ib + L_qr)
//! ```
//!
//! Every term is computed from logits: `−log s = softplus(−z)` and
//! `−log(1 − s) = softplus(z)`.

use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::encoder::{tokenize, Encoder, TokenKind, Vocabulary, CLS_ID, SEP_ID};
use crate::error::{Error, Result};
use crate::eval::{qa_accuracy, search_mrr, CodeBase, SearchQuery};
use crate::matcher::{sigmoid, softplus, Score};
use crate::model::{ModelConfig, SiameseModel};

/// `−[y·log s + (1−y)·log(1−s)]`
pub fn loss_base(s: Score, y: u8) -> f64 {
    if y == 1 {
        softplus(-s.logit)
    } else {
        softplus(s.logit)
    }
}

/// In-batch term for row `i`; the diagonal entry `row[i]` never contributes.
pub fn loss_inbatch(row: &[Score], i: usize) -> Result<f64> {
    let n = row.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if i >= n {
        return Err(Error::LengthMismatch { left: i, right: n });
    }
    let sum: f64 = row
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, s)| softplus(s.logit))
        .sum();
    Ok(sum / (n - 1) as f64)
}

/// Rewritten-query term for row `i`. `rewritten_row` holds the scores of `q'_i`
/// against every batch code; `None` (label 0 or a skipped rewrite) gives 0.
pub fn loss_qra(label: u8, rewritten_row: Option<&[Score]>, i: usize, with_inbatch: bool) -> Result<f64> {
    let Some(row) = rewritten_row else {
        return Ok(0.0);
    };
    if label != 1 {
        return Ok(0.0);
    }
    if i >= row.len() {
        return Err(Error::LengthMismatch {
            left: i,
            right: row.len(),
        });
    }
    let mut loss = loss_base(row[i], 1);
    if with_inbatch {
        loss += loss_inbatch(row, i)?;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewriteMode {
    Delete,
    Switch,
    Copy,
}

impl std::str::FromStr for RewriteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delete" => Ok(RewriteMode::Delete),
            "switch" => Ok(RewriteMode::Switch),
            "copy" => Ok(RewriteMode::Copy),
            other => Err(Error::Config(format!("unknown rewrite mode `{other}`"))),
        }
    }
}

/// Rewrites at explicit positions. `Delete` and `Copy` use `i`; `Switch`
/// exchanges `i` and `j`. Returns `None` when the query is too short or an
/// index is out of range.
pub fn rewrite_at<T: Clone>(tokens: &[T], mode: RewriteMode, i: usize, j: usize) -> Option<Vec<T>> {
    let n = tokens.len();
    let mut out = tokens.to_vec();
    match mode {
        RewriteMode::Delete => {
            if n < 2 || i >= n {
                return None;
            }
            out.remove(i);
        }
        RewriteMode::Switch => {
            if n < 2 || i >= n || j >= n || i == j {
                return None;
            }
            out.swap(i, j);
        }
        RewriteMode::Copy => {
            if i >= n {
                return None;
            }
            out.insert(i + 1, tokens[i].clone());
        }
    }
    Some(out)
}

/// Random rewrite of content tokens (no `[CLS]`/`[SEP]`).
pub fn rewrite_query<T: Clone>(tokens: &[T], mode: RewriteMode, rng: &mut impl Rng) -> Option<Vec<T>> {
    let n = tokens.len();
    match mode {
        RewriteMode::Delete | RewriteMode::Switch if n < 2 => None,
        RewriteMode::Copy if n == 0 => None,
        RewriteMode::Switch => {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            rewrite_at(tokens, mode, i, j)
        }
        _ => {
            let i = rng.random_range(0..n);
            rewrite_at(tokens, mode, i, i)
        }
    }
}

/// One training example in id form. Query ids carry `[CLS]`/`[SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchExample {
    pub query: Vec<usize>,
    pub code: Vec<usize>,
    pub label: u8,
    pub rewritten: Option<Vec<usize>>,
}

impl BatchExample {
    /// Rewrites the content ids between `[CLS]` and `[SEP]`.
    pub fn with_rewrite(mut self, mode: RewriteMode, rng: &mut impl Rng) -> Self {
        let content = strip_specials(&self.query);
        self.rewritten = rewrite_query(content, mode, rng).map(wrap_specials);
        self
    }
}

fn strip_specials(ids: &[usize]) -> &[usize] {
    let start = usize::from(ids.first() == Some(&CLS_ID));
    let end = if ids.len() > start && ids.last() == Some(&SEP_ID) {
        ids.len() - 1
    } else {
        ids.len()
    };
    &ids[start..end]
}

fn wrap_specials(content: Vec<usize>) -> Vec<usize> {
    let mut ids = Vec::with_capacity(content.len() + 2);
    ids.push(CLS_ID);
    ids.extend(content);
    ids.push(SEP_ID);
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossTerms {
    pub inbatch: bool,
    pub rewrite: bool,
}

/// Batch means of each term; `total = base + inbatch + qra`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub base: f64,
    pub inbatch: f64,
    pub qra: f64,
}

/// Laid out like the encoder's and matcher's `params()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub encoder: Vec<f64>,
    pub matcher: Vec<f64>,
}

/// Batch loss and its gradient with respect to every model parameter.
pub fn loss_total<E: Encoder>(
    batch: &[BatchExample],
    model: &SiameseModel<E>,
    terms: LossTerms,
) -> Result<(LossBreakdown, ModelGradient)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyInput("batch"));
    }
    if terms.inbatch && n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let encoder = &model.encoder;
    let codes = batch
        .iter()
        .map(|ex| encoder.encode(&ex.code))
        .collect::<Result<Vec<_>>>()?;
    let mut query_ids: Vec<&[usize]> = batch.iter().map(|ex| ex.query.as_slice()).collect();
    // (example index, grid row) of each rewritten query
    let mut rewrites = Vec::new();
    if terms.rewrite {
        for (i, ex) in batch.iter().enumerate() {
            if let (1, Some(ids)) = (ex.label, &ex.rewritten) {
                rewrites.push((i, query_ids.len()));
                query_ids.push(ids);
            }
        }
    }
    let queries = query_ids
        .iter()
        .map(|ids| encoder.encode(ids))
        .collect::<Result<Vec<_>>>()?;
    let grid = model.matcher.score_grid(&queries, &codes)?;

    let row = |r: usize| -> Vec<Score> { (0..n).map(|j| grid.score(r, j)).collect() };
    let mut parts = LossBreakdown::default();
    for (i, ex) in batch.iter().enumerate() {
        parts.base += loss_base(grid.score(i, i), ex.label);
        if terms.inbatch {
            parts.inbatch += loss_inbatch(&row(i), i)?;
        }
    }
    for &(i, r) in &rewrites {
        parts.qra += loss_qra(1, Some(&row(r)), i, terms.inbatch)?;
    }
    let scale = 1.0 / n as f64;
    parts.base *= scale;
    parts.inbatch *= scale;
    parts.qra *= scale;
    parts.total = parts.base + parts.inbatch + parts.qra;
    if !parts.total.is_finite() {
        return Err(Error::NonFinite {
            what: format!("batch loss {parts:?}"),
        });
    }

    let mut dlogits = Array2::<f64>::zeros(grid.logits.dim());
    let off = if n > 1 { scale / (n - 1) as f64 } else { 0.0 };
    let mut fill_row = |r: usize, i: usize, y: u8| {
        for j in 0..n {
            let z = grid.logits[[r, j]];
            if j == i {
                dlogits[[r, j]] = scale * (sigmoid(z) - f64::from(y));
            } else if terms.inbatch {
                dlogits[[r, j]] = off * sigmoid(z);
            }
        }
    };
    for (i, ex) in batch.iter().enumerate() {
        fill_row(i, i, ex.label);
    }
    for &(i, r) in &rewrites {
        fill_row(r, i, 1);
    }

    let grads = grid.backward(&model.matcher, dlogits.view())?;
    let mut enc_grad = vec![0.0; encoder.params().len()];
    for (ids, g) in query_ids.iter().zip(&grads.queries) {
        encoder.accumulate_gradient(ids, g.view(), &mut enc_grad)?;
    }
    for (ex, g) in batch.iter().zip(&grads.codes) {
        encoder.accumulate_gradient(&ex.code, g.view(), &mut enc_grad)?;
    }
    Ok((
        parts,
        ModelGradient {
            encoder: enc_grad,
            matcher: grads.matcher,
        },
    ))
}

/// Adam with decoupled weight decay, one moment buffer per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(group_sizes: &[usize], weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: group_sizes.iter().map(|&k| vec![0.0; k]).collect(),
            v: group_sizes.iter().map(|&k| vec![0.0; k]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every group at learning rate `lr`.
    pub fn step(&mut self, groups: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if groups.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                left: groups.len(),
                right: self.m.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (g, (params, grad)) in groups.iter_mut().zip(grads).enumerate() {
            if params.len() != self.m[g].len() || grad.len() != params.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.m[g].len(),
                    got: grad.len(),
                });
            }
            let (m, v) = (&mut self.m[g], &mut self.v[g]);
            for k in 0..params.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                params[k] -= lr * self.weight_decay * params[k];
                params[k] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup to `peak` over the first `warmup` fraction of `total` steps,
/// then linear decay to zero. `step` is 0-based.
pub fn learning_rate(peak: f64, warmup: f64, step: usize, total: usize) -> f64 {
    let warm = (warmup * total as f64).ceil() as usize;
    if step < warm {
        return peak * (step + 1) as f64 / warm as f64;
    }
    let rest = total.saturating_sub(warm);
    if rest == 0 {
        return peak;
    }
    peak * (total - step) as f64 / rest as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of all optimizer steps spent in linear warmup.
    pub warmup: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub enable_iba: bool,
    pub enable_qra: bool,
    pub qra_mode: RewriteMode,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-2,
            warmup: 0.1,
            weight_decay: 0.01,
            epochs: 30,
            seed: 0,
            enable_iba: true,
            enable_qra: true,
            qra_mode: RewriteMode::Switch,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return Err(Error::Config(format!("warmup must be in [0, 1], got {}", self.warmup)));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.model.dim < 2 {
            return Err(Error::Config(format!("model.dim must be >= 2, got {}", self.model.dim)));
        }
        Ok(())
    }

    pub fn terms(&self) -> LossTerms {
        LossTerms {
            inbatch: self.enable_iba,
            rewrite: self.enable_qra,
        }
    }
}

/// Held-out data used to pick the best epoch.
#[derive(Debug, Clone, Copy)]
pub enum Validation<'a> {
    None,
    /// Accuracy at threshold 0.5.
    Qa(&'a [Example]),
    /// MRR over the codebase.
    Search {
        queries: &'a [SearchQuery],
        codebase: &'a CodeBase,
    },
}

impl Validation<'_> {
    pub fn metric<E: Encoder + Sync>(&self, model: &SiameseModel<E>) -> Result<Option<f64>> {
        match self {
            Validation::None => Ok(None),
            Validation::Qa(examples) => qa_accuracy(model, examples, 0.5).map(Some),
            Validation::Search { queries, codebase } => search_mrr(model, queries, codebase).map(|r| Some(r.mrr)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub valid_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best epoch by validation metric, or the last epoch without validation.
    pub model: SiameseModel,
    pub history: Vec<EpochRecord>,
    pub initial_metric: Option<f64>,
    /// 0 means the initialization was never beaten.
    pub best_epoch: usize,
}

pub fn write_history(history: &[EpochRecord], mut out: impl Write) -> std::io::Result<()> {
    for rec in history {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Vocabulary over lowercased query tokens and code tokens of `examples`.
pub fn build_vocabulary(examples: &[Example], min_freq: usize) -> Vocabulary {
    let seqs: Vec<Vec<String>> = examples
        .iter()
        .flat_map(|ex| {
            [
                tokenize(&ex.query.to_lowercase(), TokenKind::Query).into_vec(),
                tokenize(&ex.code, TokenKind::Code).into_vec(),
            ]
        })
        .collect();
    Vocabulary::build(seqs.iter(), min_freq)
}

pub fn train(config: &TrainConfig, examples: &[Example], validation: Validation<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    let vocab = build_vocabulary(examples, config.model.min_freq);
    let mut model = SiameseModel::init(vocab, config.model, config.seed)?;
    let encoded: Vec<BatchExample> = examples
        .iter()
        .map(|ex| BatchExample {
            query: model.query_ids(&ex.query),
            code: model.code_ids(&ex.code),
            label: ex.label,
            rewritten: None,
        })
        .collect();

    let initial_metric = validation.metric(&model)?;
    let mut best = (initial_metric, model.clone(), 0usize);
    let mut history = Vec::with_capacity(config.epochs);
    if encoded.is_empty() || config.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            history,
            initial_metric,
            best_epoch: 0,
        });
    }

    let bs = config.batch_size;
    let full = encoded.len() / bs;
    let tail = encoded.len() % bs;
    let batches_per_epoch = full + usize::from(tail > 1 || (tail == 1 && !config.enable_iba));
    let total_steps = batches_per_epoch * config.epochs;
    let mut opt = AdamW::new(&[model.encoder.params().len(), model.matcher.params().len()], config.weight_decay);
    let mut order: Vec<usize> = (0..encoded.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (step, chunk) in order.chunks(bs).enumerate() {
            if chunk.len() < 2 && config.enable_iba {
                continue;
            }
            let batch: Vec<BatchExample> = chunk
                .iter()
                .map(|&k| {
                    let ex = encoded[k].clone();
                    if config.enable_qra && ex.label == 1 {
                        ex.with_rewrite(config.qra_mode, &mut rng)
                    } else {
                        ex
                    }
                })
                .collect();
            let (loss, grad) = match loss_total(&batch, &model, config.terms()) {
                Ok(v) => v,
                Err(Error::NonFinite { what }) => {
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        reason: what,
                        last_good: Box::new(model),
                    })
                }
                Err(e) => return Err(e),
            };
            let lr = learning_rate(config.learning_rate, config.warmup, opt.steps() as usize, total_steps);
            let SiameseModel { encoder, matcher, .. } = &mut model;
            opt.step(
                &mut [encoder.params_mut(), matcher.params_mut()],
                &[&grad.encoder, &grad.matcher],
                lr,
            )?;
            loss_sum += loss.total;
            batches += 1;
        }
        let metric = validation.metric(&model)?;
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            valid_metric: metric,
        });
        if let (Some(m), Some(b)) = (metric, best.0) {
            if m > b {
                best = (Some(m), model.clone(), epoch);
            }
        }
    }

    let (model, best_epoch) = match validation {
        Validation::None => (model, config.epochs),
        _ => (best.1, best.2),
    };
    Ok(TrainOutcome {
        model,
        history,
        initial_metric,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn p(x: f64) -> Score {
        Score::from_prob(x)
    }

    #[test]
    fn base_closed_forms() {
        assert!((loss_base(p(0.5), 1) - LN2).abs() < 1e-12);
        assert!((loss_base(p(0.5), 0) - LN2).abs() < 1e-12);
        assert!((loss_base(p(0.75), 1) - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert!(loss_base(Score::from_logit(800.0), 0).is_finite());
    }

    #[test]
    fn inbatch_closed_forms() {
        assert!((loss_inbatch(&[p(0.5), p(0.5)], 0).unwrap() - LN2).abs() < 1e-12);
        assert!((loss_inbatch(&[p(0.5); 3], 1).unwrap() - LN2).abs() < 1e-12);
        let v = loss_inbatch(&[p(0.9), p(0.25), p(0.75)], 0).unwrap();
        assert!((v - 0.836_988_216_337_493).abs() < 1e-9, "{v}");
        assert!(matches!(loss_inbatch(&[p(0.5)], 0), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn qra_zero_cases() {
        assert_eq!(loss_qra(0, Some(&[p(0.3), p(0.4)]), 0, true).unwrap(), 0.0);
        assert_eq!(loss_qra(1, None, 0, true).unwrap(), 0.0);
        let v = loss_qra(1, Some(&[p(0.5), p(0.5)]), 0, true).unwrap();
        assert!((v - 2.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn rewrites_by_position() {
        let q = ["read", "write", "file"];
        assert_eq!(rewrite_at(&q, RewriteMode::Switch, 0, 1).unwrap(), ["write", "read", "file"]);
        assert_eq!(rewrite_at(&q, RewriteMode::Delete, 2, 2).unwrap(), ["read", "write"]);
        assert_eq!(rewrite_at(&["read", "file"], RewriteMode::Copy, 0, 0).unwrap(), ["read", "read", "file"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rewrite_query(&["x"], RewriteMode::Delete, &mut rng), None);
        assert_eq!(rewrite_query(&["x"], RewriteMode::Switch, &mut rng), None);
        assert_eq!(rewrite_query(&["x"], RewriteMode::Copy, &mut rng).unwrap(), ["x", "x"]);
    }

    #[test]
    fn rewrite_keeps_specials() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = BatchExample {
            query: vec![CLS_ID, 7, 8, 9, SEP_ID],
            code: vec![CLS_ID, 4, SEP_ID],
            label: 1,
            rewritten: None,
        }
        .with_rewrite(RewriteMode::Delete, &mut rng);
        let r = ex.rewritten.unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!((r[0], r[3]), (CLS_ID, SEP_ID));
    }

    #[test]
    fn adamw_zero_gradient_is_pure_decay() {
        let mut opt = AdamW::new(&[3], 0.1);
        let mut params = vec![1.0, -2.0, 0.5];
        opt.step(&mut [&mut params], &[&[0.0; 3]], 0.01).unwrap();
        for (after, before) in params.iter().zip([1.0, -2.0, 0.5]) {
            assert!((after - before * (1.0 - 0.001)).abs() < 1e-15);
        }
        let mut opt = AdamW::new(&[3], 0.0);
        let mut params2 = vec![1.0, -2.0, 0.5];
        opt.step(&mut [&mut params2], &[&[0.0; 3]], 0.01).unwrap();
        assert_eq!(params2, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn schedule_shape() {
        let lr: Vec<f64> = (0..10).map(|s| learning_rate(1.0, 0.2, s, 10)).collect();
        assert_eq!(lr[0], 0.5);
        assert_eq!(lr[1], 1.0);
        assert_eq!(lr[2], 1.0);
        assert!(lr[2..].windows(2).all(|w| w[1] < w[0]));
        assert!(lr[9] > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "qra_mode": "copy"}"#).unwrap();
        assert_eq!(parsed.epochs, 3);
        assert_eq!(parsed.qra_mode, RewriteMode::Copy);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }
}

//! Candidate pair mining: every query is matched to its most similar code by
//! cosine similarity of encoder embeddings, weak matches are dropped, then
//! no code may be kept for more than a fixed number of queries.
//!
//! Scoring is brute force, O(|Q|·|C|·d), parallel over queries.

use std::cmp::Ordering;
use std::collections::HashMap;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::model::SiameseModel;

pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub similarity_threshold: f64,
    pub max_code_occurrence: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            similarity_threshold: 0.5,
            max_code_occurrence: 10,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::Config(format!(
                "similarity threshold must be in [-1, 1], got {}",
                self.similarity_threshold
            )));
        }
        if self.max_code_occurrence == 0 {
            return Err(Error::Config("max code occurrence must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub query_id: String,
    pub code_id: String,
    pub similarity: f64,
}

/// Selection over precomputed embeddings. Output is ordered by code_id, then
/// descending similarity, then query_id.
pub fn curate_embeddings(
    queries: &[(String, Array1<f64>)],
    codes: &[(String, Array1<f64>)],
    config: &CurationConfig,
) -> Result<Vec<Candidate>> {
    config.validate()?;
    if codes.is_empty() {
        return Err(Error::EmptyInput("code store"));
    }
    let code_norms = codes
        .iter()
        .map(|(_, v)| {
            let n = v.dot(v).sqrt();
            if n == 0.0 {
                Err(Error::ZeroVector)
            } else {
                Ok(n)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let best: Vec<Option<Candidate>> = queries
        .par_iter()
        .map(|(qid, q)| {
            let qn = q.dot(q).sqrt();
            if qn == 0.0 {
                return Err(Error::ZeroVector);
            }
            let mut top: Option<(f64, usize)> = None;
            for (k, ((cid, c), cn)) in codes.iter().zip(&code_norms).enumerate() {
                if c.len() != q.len() {
                    return Err(Error::DimensionMismatch {
                        expected: q.len(),
                        got: c.len(),
                    });
                }
                let sim = (q.dot(c) / (qn * cn)).clamp(-1.0, 1.0);
                let better = match top {
                    None => true,
                    Some((s, j)) => sim > s || (sim == s && cid < &codes[j].0),
                };
                if better {
                    top = Some((sim, k));
                }
            }
            let (sim, k) = top.expect("code store is non-empty");
            Ok((sim >= config.similarity_threshold).then(|| Candidate {
                query_id: qid.clone(),
                code_id: codes[k].0.clone(),
                similarity: sim,
            }))
        })
        .collect::<Result<_>>()?;

    let mut kept: Vec<Candidate> = best.into_iter().flatten().collect();
    kept.sort_by(|a, b| {
        a.code_id
            .cmp(&b.code_id)
            .then(b.similarity.partial_cmp(&a.similarity).unwrap_or(Ordering::Equal))
            .then(a.query_id.cmp(&b.query_id))
    });
    let mut seen: HashMap<String, usize> = HashMap::new();
    kept.retain(|c| {
        let n = seen.entry(c.code_id.clone()).or_insert(0);
        *n += 1;
        *n <= config.max_code_occurrence
    });
    Ok(kept)
}

/// Embeds `(id, text)` queries and codes with `model`'s encoder and selects
/// candidates.
pub fn curate<E: Encoder + Sync>(
    queries: &[(String, String)],
    codes: &[(String, String)],
    model: &SiameseModel<E>,
    config: &CurationConfig,
) -> Result<Vec<Candidate>> {
    if codes.is_empty() {
        return Err(Error::EmptyInput("code store"));
    }
    let q = queries
        .par_iter()
        .map(|(id, text)| Ok((id.clone(), model.embed_query(text)?)))
        .collect::<Result<Vec<_>>>()?;
    let c = codes
        .par_iter()
        .map(|(id, text)| Ok((id.clone(), model.embed_code(text)?)))
        .collect::<Result<Vec<_>>>()?;
    curate_embeddings(&q, &c, config)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn cosine_closed_forms() {
        let a = array![1.0, 1.0];
        assert!((cosine(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(array![1.0, 0.0].view(), array![0.0, 3.0].view()).unwrap(), 0.0);
        let v = cosine(a.view(), array![1.0, 0.0].view()).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            cosine(array![0.0, 0.0].view(), a.view()),
            Err(Error::ZeroVector)
        ));
    }

    /// Unit vector whose cosine with [1, 0] is `sim`.
    fn at(sim: f64) -> Array1<f64> {
        array![sim, (1.0 - sim * sim).sqrt()]
    }

    fn code(id: &str) -> (String, Array1<f64>) {
        (id.to_string(), array![1.0, 0.0])
    }

    #[test]
    fn threshold_and_argmax() {
        let cfg = CurationConfig::default();
        let out = curate_embeddings(&[("q".into(), at(0.6))], &[code("c")], &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].similarity - 0.6).abs() < 1e-12);
        let out = curate_embeddings(&[("q".into(), at(0.49))], &[code("c")], &cfg).unwrap();
        assert!(out.is_empty());

        let codes = vec![
            ("a".to_string(), array![0.0, 1.0]),
            ("b".to_string(), array![1.0, 0.0]),
        ];
        let out = curate_embeddings(&[("q".into(), at(0.9))], &codes, &cfg).unwrap();
        assert_eq!(out[0].code_id, "b");
    }

    #[test]
    fn ties_go_to_smallest_code_id() {
        let codes = vec![code("z"), code("m"), code("x")];
        let out = curate_embeddings(&[("q".into(), at(0.8))], &codes, &CurationConfig::default()).unwrap();
        assert_eq!(out[0].code_id, "m");
    }

    #[test]
    fn occurrence_cap_keeps_most_similar() {
        let queries: Vec<(String, Array1<f64>)> =
            (0..12).map(|k| (format!("q{k:02}"), at(0.55 + 0.03 * k as f64))).collect();
        let out = curate_embeddings(&queries, &[code("c")], &CurationConfig::default()).unwrap();
        assert_eq!(out.len(), 10);
        let kept: Vec<&str> = out.iter().map(|c| c.query_id.as_str()).collect();
        assert_eq!(kept, ["q11", "q10", "q09", "q08", "q07", "q06", "q05", "q04", "q03", "q02"]);
    }

    #[test]
    fn empty_code_store() {
        assert!(curate_embeddings(&[("q".into(), at(0.6))], &[], &CurationConfig::default()).is_err());
    }
}

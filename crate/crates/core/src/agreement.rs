//! Inter-annotator agreement for nominal votes.
//!
//! Krippendorff's alpha is computed from the coincidence matrix: every item
//! with `m ≥ 2` votes adds each ordered pair of votes from different
//! annotators with weight `1/(m−1)`. With `n_c` the marginal of value `c` and
//! `n` their total,
//!
//! ```text
//! α = 1 − (n − 1) · Σ_{c≠k} o_ck / Σ_{c≠k} n_c·n_k
//! ```
//!
//! Items with fewer than two votes are not pairable and are ignored.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Items × annotators; `None` is a missing vote.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgreementTable {
    pub item_ids: Vec<String>,
    pub annotators: Vec<String>,
    pub cells: Vec<Vec<Option<u8>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Intent,
    Answer,
}

/// One vote. Intent votes use 1 for "has intent" and 0 for "no intent".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub pair_id: String,
    pub annotator_id: String,
    pub step: Step,
    pub value: u8,
}

impl AgreementTable {
    /// Anonymous rows; annotator columns are positional.
    pub fn from_rows(rows: Vec<Vec<Option<u8>>>) -> Self {
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        AgreementTable {
            item_ids: (0..rows.len()).map(|i| i.to_string()).collect(),
            annotators: (0..width).map(|i| i.to_string()).collect(),
            cells: rows
                .into_iter()
                .map(|mut r| {
                    r.resize(width, None);
                    r
                })
                .collect(),
        }
    }

    /// Table of the votes cast in `step`; items and annotators sorted by id.
    pub fn from_votes(votes: &[VoteRecord], step: Step) -> Result<Self> {
        let mut by_item: BTreeMap<&str, BTreeMap<&str, u8>> = BTreeMap::new();
        let mut annotators = BTreeSet::new();
        for v in votes.iter().filter(|v| v.step == step) {
            annotators.insert(v.annotator_id.as_str());
            if by_item
                .entry(&v.pair_id)
                .or_default()
                .insert(&v.annotator_id, v.value)
                .is_some()
            {
                return Err(Error::Integrity(format!(
                    "annotator `{}` voted twice on `{}` ({step:?})",
                    v.annotator_id, v.pair_id
                )));
            }
        }
        let annotators: Vec<&str> = annotators.into_iter().collect();
        Ok(AgreementTable {
            item_ids: by_item.keys().map(|k| k.to_string()).collect(),
            cells: by_item
                .values()
                .map(|row| annotators.iter().map(|a| row.get(a).copied()).collect())
                .collect(),
            annotators: annotators.into_iter().map(String::from).collect(),
        })
    }

    pub fn item_votes(&self, item: usize) -> Vec<u8> {
        self.cells[item].iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaValue {
    Value(f64),
    /// Every pairable vote carries the same value, so expected disagreement is 0.
    Degenerate,
}

impl AlphaValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            AlphaValue::Value(v) => Some(*v),
            AlphaValue::Degenerate => None,
        }
    }
}

pub fn krippendorff_alpha(table: &AgreementTable) -> Result<AlphaValue> {
    let mut coincidence: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    let mut pairable = 0usize;
    for row in &table.cells {
        let votes: Vec<u8> = row.iter().flatten().copied().collect();
        let m = votes.len();
        if m < 2 {
            continue;
        }
        pairable += 1;
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for v in &votes {
            *counts.entry(*v).or_default() += 1;
        }
        let w = 1.0 / (m - 1) as f64;
        for (&c, &nc) in &counts {
            for (&k, &nk) in &counts {
                let pairs = if c == k { nc * (nc - 1) } else { nc * nk };
                *coincidence.entry((c, k)).or_default() += w * pairs as f64;
            }
        }
    }
    if pairable < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 items with 2 or more votes, found {pairable}"
        )));
    }
    let mut marginals: BTreeMap<u8, f64> = BTreeMap::new();
    for (&(c, _), &o) in &coincidence {
        *marginals.entry(c).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidence.iter().filter(|((c, k), _)| c != k).map(|(_, o)| o).sum();
    let mut expected = 0.0;
    for (&c, &nc) in &marginals {
        for (&k, &nk) in &marginals {
            if c != k {
                expected += nc * nk;
            }
        }
    }
    if expected == 0.0 {
        return Ok(AlphaValue::Degenerate);
    }
    Ok(AlphaValue::Value(1.0 - (n - 1.0) * observed / expected))
}

/// Strict majority; `None` on a tie or no votes.
pub fn majority_label(votes: &[u8]) -> Option<u8> {
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(*v).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|(_, c)| 2 * c > votes.len())
        .map(|(v, _)| v)
}

/// Share of votes that agree with the most common value; 0 for no votes.
pub fn item_agreement(votes: &[u8]) -> f64 {
    if votes.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(*v).or_default() += 1;
    }
    *counts.values().max().expect("non-empty") as f64 / votes.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgreementPolicy {
    pub min_agreement: f64,
    pub min_votes: usize,
}

impl Default for AgreementPolicy {
    fn default() -> Self {
        AgreementPolicy {
            min_agreement: 2.0 / 3.0,
            min_votes: crate::corpus::MIN_VOTES,
        }
    }
}

impl AgreementPolicy {
    pub fn accepts(&self, votes: &[u8]) -> bool {
        votes.len() >= self.min_votes
            && item_agreement(votes) + 1e-12 >= self.min_agreement
            && majority_label(votes).is_some()
    }
}

/// `(id, majority label)` of every item the policy accepts, in input order.
pub fn filter_by_agreement<'a, S: AsRef<str> + 'a>(
    items: impl IntoIterator<Item = (S, &'a [u8])>,
    policy: &AgreementPolicy,
) -> Vec<(String, u8)> {
    items
        .into_iter()
        .filter(|(_, votes)| policy.accepts(votes))
        .map(|(id, votes)| (id.as_ref().to_string(), majority_label(votes).expect("accepted")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAgreement {
    pub item_id: String,
    pub votes: Vec<u8>,
    pub agreement: f64,
    pub label: Option<u8>,
}

/// `alpha` is `None` when too few items are pairable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha: Option<AlphaValue>,
    pub items: Vec<ItemAgreement>,
    pub retained: Vec<String>,
    pub removed: Vec<String>,
}

impl AgreementReport {
    pub fn build(table: &AgreementTable, policy: &AgreementPolicy) -> Result<Self> {
        let alpha = match krippendorff_alpha(table) {
            Ok(a) => Some(a),
            Err(Error::InsufficientData(_)) => None,
            Err(e) => return Err(e),
        };
        let mut report = AgreementReport {
            alpha,
            items: Vec::with_capacity(table.item_ids.len()),
            retained: Vec::new(),
            removed: Vec::new(),
        };
        for (i, id) in table.item_ids.iter().enumerate() {
            let votes = table.item_votes(i);
            if policy.accepts(&votes) {
                report.retained.push(id.clone());
            } else {
                report.removed.push(id.clone());
            }
            report.items.push(ItemAgreement {
                item_id: id.clone(),
                agreement: item_agreement(&votes),
                label: majority_label(&votes),
                votes,
            });
        }
        Ok(report)
    }
}

/// Reports for both annotation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReports {
    pub intent: AgreementReport,
    pub answer: AgreementReport,
}

pub fn report_votes(votes: &[VoteRecord], policy: &AgreementPolicy) -> Result<StepReports> {
    Ok(StepReports {
        intent: AgreementReport::build(&AgreementTable::from_votes(votes, Step::Intent)?, policy)?,
        answer: AgreementReport::build(&AgreementTable::from_votes(votes, Step::Answer)?, policy)?,
    })
}

#![allow(dead_code)]

use qcmatch_annotate::{AnnotationStore, Intent, Submission};
use qcmatch_core::agreement::AgreementPolicy;
use qcmatch_core::corpus::{read_pairs, Corpus};

pub fn candidates(n: usize) -> Corpus {
    let mut jsonl = String::new();
    for k in 0..n {
        let line = serde_json::json!({
            "pair_id": format!("p{k:02}"),
            "query": format!("python add {k} to a number"),
            "code": format!("def add_{k}(x):\n    \"\"\"Add {k}.\"\"\"\n    return x + {k}"),
        });
        jsonl.push_str(&line.to_string());
        jsonl.push('\n');
    }
    read_pairs(jsonl.as_bytes(), false).unwrap()
}

pub fn store(n: usize) -> AnnotationStore {
    AnnotationStore::in_memory(candidates(n), AgreementPolicy::default())
}

pub fn submission(pair_id: &str, annotator_id: &str, answer: Option<u8>) -> Submission {
    Submission {
        pair_id: pair_id.into(),
        annotator_id: annotator_id.into(),
        intent: if answer.is_some() { Intent::Yes } else { Intent::No },
        answer,
    }
}

/// Runs annotators round-robin until none has work left. `decide` maps
/// (pair index, annotator index) to `None` for "no intent" or the answer.
/// Returns every (annotator, pair) assignment in serving order.
pub fn run_flow(
    store: &mut AnnotationStore,
    annotators: &[String],
    decide: impl Fn(usize, usize) -> Option<u8>,
) -> Vec<(String, String)> {
    let mut served = Vec::new();
    loop {
        let mut progressed = false;
        for (a, id) in annotators.iter().enumerate() {
            if let Some(task) = store.next_task(id).unwrap() {
                let k: usize = task.pair_id[1..].parse().unwrap();
                served.push((id.clone(), task.pair_id.clone()));
                store.submit(submission(&task.pair_id, id, decide(k, a))).unwrap();
                progressed = true;
            }
        }
        if !progressed {
            return served;
        }
    }
}

/// Nominal alpha by pooled pair enumeration over items with at least two votes.
pub fn alpha_oracle(items: &[Vec<u8>]) -> Option<f64> {
    let pairable: Vec<&Vec<u8>> = items.iter().filter(|v| v.len() >= 2).collect();
    let n: f64 = pairable.iter().map(|v| v.len() as f64).sum();
    let mut observed = 0.0;
    for v in &pairable {
        let mut d = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                if i != j && v[i] != v[j] {
                    d += 1.0;
                }
            }
        }
        observed += d / (v.len() as f64 - 1.0);
    }
    let ones: f64 = pairable.iter().flat_map(|v| v.iter()).filter(|x| **x == 1).count() as f64;
    let expected = 2.0 * ones * (n - ones) / (n - 1.0);
    (expected > 0.0).then(|| 1.0 - observed / expected)
}

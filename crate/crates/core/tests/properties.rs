use std::collections::{HashMap, HashSet};

use ndarray::Array1;
use proptest::prelude::*;
use qcmatch_core::agreement::{filter_by_agreement, krippendorff_alpha, AgreementPolicy, AgreementTable, AlphaValue};
use qcmatch_core::coclr::{loss_base, loss_inbatch, rewrite_query, RewriteMode};
use qcmatch_core::corpus::{make_splits, read_pairs, write_pairs, LabeledPair, SplitSpec, Task};
use qcmatch_core::curation::{curate_embeddings, CurationConfig};
use qcmatch_core::encoder::{BagEncoder, Encoder, CLS_ID, SEP_ID};
use qcmatch_core::eval::{search_mrr, CodeBase, MatchScorer, SearchQuery};
use qcmatch_core::intent::{classify, RuleSet};
use qcmatch_core::matcher::{sigmoid, Matcher, Score};
use qcmatch_core::pyfunc::{parse_function, strip_components, ComponentMask};
use qcmatch_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,8}"
}

prop_compose! {
    fn python_function()(
        decorated in any::<bool>(),
        name in ident(),
        args in prop::collection::vec(ident(), 0..4),
        doc in prop::option::of("[A-Za-z ,.]{1,30}"),
        triple in any::<bool>(),
        body in prop::collection::vec(("[a-z]{1,6}", "[a-z0-9]{1,6}"), 1..4),
        indent in prop::sample::select(vec!["    ", "  ", "\t"]),
    ) -> (String, Option<String>) {
        let mut text = String::new();
        if decorated {
            text.push_str("@cache\n");
        }
        text.push_str(&format!("def {name}({}):\n", args.join(", ")));
        let doc_literal = doc.map(|d| if triple { format!("\"\"\"{d}\"\"\"") } else { format!("'{d}'") });
        if let Some(lit) = &doc_literal {
            text.push_str(&format!("{indent}{lit}\n"));
        }
        for (var, val) in &body {
            text.push_str(&format!("{indent}{var} = {val}\n"));
        }
        text.push_str(&format!("{indent}return None\n"));
        (text, doc_literal)
    }
}

proptest! {
    #[test]
    fn keep_all_round_trip((text, doc) in python_function()) {
        let f = parse_function(&text).unwrap();
        prop_assert_eq!(strip_components(&f, ComponentMask::ALL).unwrap(), text.clone());
        prop_assert_eq!(f.docstring(), doc.as_deref().unwrap_or(""));
        prop_assert!(f.header().starts_with("@cache") || f.header().starts_with("def "));
        prop_assert!(f.body().ends_with("return None"));
    }

    #[test]
    fn stripped_components_stay_in_order((text, _) in python_function(), h in any::<bool>(), d in any::<bool>(), b in any::<bool>()) {
        let f = parse_function(&text).unwrap();
        let mask = ComponentMask::new(h, d, b);
        match strip_components(&f, mask) {
            Err(_) => prop_assert!(!mask.is_valid()),
            Ok(out) => {
                let mut rest = out.as_str();
                for (keep, part) in [(h, f.header()), (d, f.docstring()), (b, f.body())] {
                    if keep && !part.is_empty() {
                        let at = rest.find(part);
                        prop_assert!(at.is_some(), "{:?} missing from {:?}", part, out);
                        rest = &rest[at.unwrap() + part.len()..];
                    }
                }
            }
        }
    }

    #[test]
    fn corpus_round_trip(n in 1usize..20, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jsonl = String::new();
        for k in 0..n {
            let q = format!("python task {}", rng.random_range(0..5));
            let code = format!("def f{}():\n    return {}", rng.random_range(0..5), k % 3);
            let votes: Vec<u8> = (0..3).map(|_| rng.random_range(0..2)).collect();
            jsonl.push_str(&serde_json::json!({
                "pair_id": format!("p{k}"), "query": q, "code": code,
                "label": rng.random_range(0..2), "votes": votes,
            }).to_string());
            jsonl.push('\n');
        }
        let corpus = read_pairs(jsonl.as_bytes(), true).unwrap();
        let mut out = Vec::new();
        write_pairs(&corpus, &corpus.pairs, &mut out).unwrap();
        let again = read_pairs(out.as_slice(), true).unwrap();
        prop_assert_eq!(&again.pairs, &corpus.pairs);
        prop_assert_eq!(again.queries.len(), corpus.queries.len());
        prop_assert_eq!(again.codes.len(), corpus.codes.len());
        let mut out2 = Vec::new();
        write_pairs(&again, &again.pairs, &mut out2).unwrap();
        prop_assert_eq!(out, out2);
    }

    #[test]
    fn splits_partition(n_pos in 10usize..60, n_neg in 0usize..60, seed in any::<u64>(), valid in 1usize..5, test in 1usize..5) {
        let pairs: Vec<LabeledPair> = (0..n_pos + n_neg)
            .map(|k| LabeledPair {
                pair_id: format!("p{k:03}"),
                query_id: format!("q{k}"),
                code_id: format!("c{k}"),
                label: u8::from(k < n_pos),
                votes: Vec::new(),
            })
            .collect();
        let total = pairs.len();
        let spec = SplitSpec { task: Task::Search, seed, counts: vec![total - valid - test, valid, test] };
        let s = make_splits(&pairs, &spec).unwrap();
        prop_assert_eq!(&s, &make_splits(&pairs, &spec).unwrap());
        let ids: Vec<&str> = s.train.iter().chain(&s.valid).chain(&s.test).map(|p| p.pair_id.as_str()).collect();
        prop_assert_eq!(ids.len(), total);
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), total);
        prop_assert!(s.valid.iter().chain(&s.test).all(|p| p.label == 1));
    }

    #[test]
    fn bag_encoder_ignores_token_order(seed in any::<u64>(), mut ids in prop::collection::vec(4usize..20, 1..10)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = BagEncoder::init(20, 4, &mut rng).unwrap();
        let wrap = |v: &[usize]| [&[CLS_ID][..], v, &[SEP_ID][..]].concat();
        let a = enc.encode(&wrap(&ids)).unwrap();
        ids.reverse();
        let b = enc.encode(&wrap(&ids)).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_are_probabilities(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Matcher::init(4, &mut rng).unwrap();
        let q = Array1::from_vec(vec![scale, -scale, 0.5, 0.0]);
        let c = Array1::from_vec(vec![0.3, scale, -scale, 1.0]);
        let s = m.score(&m.relation(q.view(), c.view()).unwrap()).unwrap();
        let p = s.prob();
        prop_assert!(p > 0.0 && p < 1.0);
        let logit_path = 1.0 / (1.0 + (-s.logit).exp());
        prop_assert!((p - logit_path).abs() < 1e-12);
        prop_assert!((sigmoid(s.logit) - p).abs() == 0.0);
    }

    #[test]
    fn losses_nonnegative_and_finite(logits in prop::collection::vec(-700.0f64..700.0, 2..10), y in 0u8..2) {
        let row: Vec<Score> = logits.iter().map(|z| Score::from_logit(*z)).collect();
        for i in 0..row.len() {
            let b = loss_base(row[i], y);
            let ib = loss_inbatch(&row, i).unwrap();
            prop_assert!(b >= 0.0 && b.is_finite());
            prop_assert!(ib >= 0.0 && ib.is_finite());
        }
    }

    #[test]
    fn rewrite_lengths(tokens in prop::collection::vec(0u32..50, 0..15), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = tokens.len();
        let del = rewrite_query(&tokens, RewriteMode::Delete, &mut rng);
        let sw = rewrite_query(&tokens, RewriteMode::Switch, &mut rng);
        let cp = rewrite_query(&tokens, RewriteMode::Copy, &mut rng);
        prop_assert_eq!(del.map(|v| v.len()), (n >= 2).then(|| n - 1));
        let mut sorted = tokens.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sw.map(|mut v| { v.sort_unstable(); v }), (n >= 2).then_some(sorted));
        prop_assert_eq!(cp.map(|v| v.len()), (n >= 1).then_some(n + 1));
    }
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<Option<u8>>>> {
    (2usize..15, 2usize..5).prop_flat_map(|(items, raters)| {
        prop::collection::vec(
            prop::collection::vec(prop::option::weighted(0.85, 0u8..2), raters),
            items,
        )
    })
}

fn alpha(rows: &[Vec<Option<u8>>]) -> Option<AlphaValue> {
    krippendorff_alpha(&AgreementTable::from_rows(rows.to_vec())).ok()
}

fn close(a: Option<AlphaValue>, b: Option<AlphaValue>) -> bool {
    match (a, b) {
        (Some(AlphaValue::Value(x)), Some(AlphaValue::Value(y))) => (x - y).abs() < 1e-12,
        (x, y) => x == y,
    }
}

proptest! {
    #[test]
    fn alpha_relabel_invariant(rows in rows_strategy()) {
        let flipped: Vec<Vec<Option<u8>>> = rows.iter().map(|r| r.iter().map(|v| v.map(|x| 1 - x)).collect()).collect();
        prop_assert!(close(alpha(&rows), alpha(&flipped)));
    }

    #[test]
    fn alpha_column_permutation_invariant(rows in rows_strategy(), shift in 1usize..4) {
        let rotated: Vec<Vec<Option<u8>>> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                let k = shift % r.len();
                r.rotate_left(k);
                r
            })
            .collect();
        prop_assert!(close(alpha(&rows), alpha(&rotated)));
    }

    #[test]
    fn alpha_at_most_one(rows in rows_strategy()) {
        if let Some(AlphaValue::Value(a)) = alpha(&rows) {
            prop_assert!(a <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn alpha_drops_when_unanimous_item_disagrees(rows in rows_strategy(), pick in any::<prop::sample::Index>()) {
        let unanimous: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                let v: Vec<u8> = r.iter().flatten().copied().collect();
                v.len() >= 2 && v.iter().all(|x| *x == v[0])
            })
            .map(|(i, _)| i)
            .collect();
        prop_assume!(!unanimous.is_empty());
        let i = unanimous[pick.index(unanimous.len())];
        let value = rows[i].iter().flatten().next().copied().unwrap();
        let count = |v: u8| rows.iter().flatten().flatten().filter(|x| **x == v).count();
        // the unanimous value must not be the strict majority overall, see the pinned case below
        prop_assume!(count(value) <= count(1 - value));
        let mut worse = rows.clone();
        let mut flip = 0u8;
        for v in worse[i].iter_mut().flatten() {
            *v = flip;
            flip = 1 - flip;
        }
        if let (Some(AlphaValue::Value(before)), Some(AlphaValue::Value(after))) = (alpha(&rows), alpha(&worse)) {
            prop_assert!(after <= before + 1e-12, "{} -> {}", before, after);
        }
    }

    #[test]
    fn agreement_filter_monotone(items in prop::collection::vec(prop::collection::vec(0u8..2, 1..6), 1..20), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let named: Vec<(String, &[u8])> = items.iter().enumerate().map(|(k, v)| (format!("i{k}"), v.as_slice())).collect();
        let keep = |t| -> HashSet<String> {
            let policy = AgreementPolicy { min_agreement: t, min_votes: 1 };
            filter_by_agreement(named.iter().map(|(k, v)| (k.as_str(), *v)), &policy).into_iter().map(|(k, _)| k).collect()
        };
        prop_assert!(keep(hi).is_subset(&keep(lo)));
    }

    #[test]
    fn curation_invariants(
        queries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40),
        codes in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..5),
        t1 in -1.0f64..1.0, t2 in -1.0f64..1.0, cap in 1usize..6,
    ) {
        let vecs = |v: &[(f64, f64)], p: &str| -> Vec<(String, Array1<f64>)> {
            v.iter().enumerate().map(|(k, (a, b))| (format!("{p}{k:02}"), Array1::from_vec(vec![*a + 1e-3, *b]))).collect()
        };
        let (q, c) = (vecs(&queries, "q"), vecs(&codes, "c"));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let run = |t| curate_embeddings(&q, &c, &CurationConfig { similarity_threshold: t, max_code_occurrence: cap });
        let (Ok(low), Ok(high)) = (run(lo), run(hi)) else {
            // a zero-length vector is possible only in degenerate draws
            return Ok(());
        };
        prop_assert!(high.len() <= low.len());
        prop_assert!(high.iter().all(|c| c.similarity >= hi));
        let mut per_code: HashMap<&str, usize> = HashMap::new();
        for cand in &low {
            *per_code.entry(&cand.code_id).or_default() += 1;
        }
        prop_assert!(per_code.values().all(|n| *n <= cap));
    }

    #[test]
    fn intent_category_removal_is_monotone(words in prop::collection::vec(prop::sample::select(vec![
        "python", "sort", "list", "why", "jupyter", "install", "error", "exception", "class", "when", "file",
        "difference", "ide", "hide", "a.b", "f()", "read", "json", "c#", "ipv6",
    ]), 1..8), drop in 0usize..5) {
        let rules = RuleSet::default();
        let q = words.join(" ");
        let name = rules.categories.keys().nth(drop).unwrap().clone();
        let full = classify(&q, &rules);
        let reduced = classify(&q, &rules.without_category(&name));
        prop_assert!(!full.has_intent || reduced.has_intent);
        prop_assert_eq!(&full, &classify(&q, &rules));
        prop_assert_eq!(full.has_intent, full.matched_category.is_none());
    }
}

#[test]
fn alpha_can_rise_when_majority_item_starts_disagreeing() {
    let before = vec![
        vec![Some(1), Some(1), Some(1)],
        vec![Some(0), Some(1), None],
        vec![Some(1), Some(1), Some(1)],
    ];
    let mut after = before.clone();
    after[2] = vec![Some(0), Some(1), Some(0)];
    let (Some(AlphaValue::Value(a)), Some(AlphaValue::Value(b))) = (alpha(&before), alpha(&after)) else {
        panic!("expected finite alpha");
    };
    assert!(a.abs() < 1e-12);
    assert!((b - 1.0 / 15.0).abs() < 1e-12);
}

struct Table(HashMap<String, Vec<f64>>);

impl MatchScorer for Table {
    type Index = ();
    fn index_codes(&self, _: &[&str]) -> Result<()> {
        Ok(())
    }
    fn score_codes(&self, _: &(), query: &str) -> Result<Vec<Score>> {
        Ok(self.0[query].iter().map(|z| Score::from_logit(*z)).collect())
    }
}

proptest! {
    #[test]
    fn mrr_bounds_and_monotone_rescoring(
        scores in prop::collection::vec(prop::collection::vec(-5i32..5, 8), 1..10),
        golds in prop::collection::vec(0usize..8, 10),
    ) {
        let cb = CodeBase::from_entries((0..8).map(|k| (format!("c{k}"), format!("code {k}")))).unwrap();
        let queries: Vec<SearchQuery> = scores.iter().enumerate().map(|(i, _)| SearchQuery {
            query_id: format!("q{i}"), text: format!("q{i}"), gold_code_id: format!("c{}", golds[i]),
        }).collect();
        let table = |f: &dyn Fn(f64) -> f64| Table(scores.iter().enumerate()
            .map(|(i, row)| (format!("q{i}"), row.iter().map(|v| f(*v as f64)).collect())).collect());
        let a = search_mrr(&table(&|x| x), &queries, &cb).unwrap();
        let b = search_mrr(&table(&|x| (x / 3.0).exp() * 2.0 - 7.0), &queries, &cb).unwrap();
        prop_assert!(a.mrr > 0.0 && a.mrr <= 1.0);
        prop_assert_eq!(a.mrr == 1.0, a.results.iter().all(|r| r.rank_of_gold == 1));
        prop_assert_eq!(&a.results, &b.results);
    }
}

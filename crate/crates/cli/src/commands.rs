use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use qcmatch_annotate::AnnotationStore;
use qcmatch_core::agreement::{report_votes, AgreementPolicy, VoteRecord};
use qcmatch_core::coclr::{train, write_history, TrainConfig, Validation};
use qcmatch_core::corpus::{
    load_candidates, load_codes, load_pairs, load_queries, make_splits, save_pairs, save_queries, stats, CodeRecord,
    PairRecord, QueryRecord, SplitSpec, Task,
};
use qcmatch_core::curation::{curate, CurationConfig};
use qcmatch_core::eval::{qa_accuracy, search_mrr, CodeBase, SearchQuery};
use qcmatch_core::intent::{classify, prefilter_python, RuleSet};
use qcmatch_core::model::SiameseModel;
use qcmatch_core::pyfunc::{parse_function, strip_components};
use qcmatch_core::synth::{generate, SignalPlacement, SynthConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::manifest::{default_location, RunManifest};

/// Exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

pub struct RunContext {
    pub data_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

impl RunContext {
    fn input(&self, path: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn finish(&self, manifest: RunManifest, out: Option<&Path>) -> Result<()> {
        match (&self.manifest, out) {
            (Some(path), _) => manifest.write(path),
            (None, Some(out)) => manifest.write(&default_location(out)),
            (None, None) => Ok(()),
        }
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON to `out`, or to stdout.
fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn filter(ctx: &RunContext, a: &FilterArgs) -> Result<()> {
    let input = ctx.input(&a.input);
    let rules = match &a.rules {
        Some(p) => RuleSet::load(ctx.input(p))?,
        None => RuleSet::default(),
    };
    let queries = load_queries(&input)?;
    let mut kept: Vec<QueryRecord> = Vec::new();
    let mut rejected = Vec::new();
    let mut by_reason: BTreeMap<String, usize> = BTreeMap::new();
    for q in queries {
        let reason = if !prefilter_python(&q.query) {
            Some(("no-python".to_string(), None))
        } else {
            let v = classify(&q.query, &rules);
            v.matched_category.map(|c| (c, v.matched_keyword))
        };
        match reason {
            None => kept.push(q),
            Some((category, keyword)) => {
                *by_reason.entry(category.clone()).or_default() += 1;
                rejected.push(json!({
                    "query_id": q.id(),
                    "query": q.query,
                    "reason": category,
                    "keyword": keyword,
                }));
            }
        }
    }
    save_queries(&kept, &a.out)?;
    if let Some(path) = &a.rejected {
        write_jsonl(path, &rejected)?;
    }
    emit(
        &json!({ "kept": kept.len(), "rejected": rejected.len(), "by_reason": by_reason }),
        None,
    )?;

    let mut m = RunManifest::new(
        "filter",
        json!({ "rules": a.rules.as_ref().map(|p| p.display().to_string()), "keywords": rules.keyword_count() }),
        None,
    )?;
    m.input(&input)?;
    if let Some(p) = &a.rules {
        m.input(&ctx.input(p))?;
    }
    m.output(&a.out)?;
    if let Some(p) = &a.rejected {
        m.output(p)?;
    }
    ctx.finish(m, Some(&a.out))
}

#[derive(Serialize)]
struct CandidateLine {
    #[serde(flatten)]
    record: PairRecord,
    similarity: f64,
}

pub fn curate_cmd(ctx: &RunContext, a: &CurateArgs) -> Result<()> {
    let config = CurationConfig {
        similarity_threshold: a.threshold,
        max_code_occurrence: a.max_occ,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let (ckpt, qpath, cpath) = (ctx.input(&a.checkpoint), ctx.input(&a.queries), ctx.input(&a.codes));
    let model = SiameseModel::load(&ckpt)?;
    let queries: Vec<(String, String)> = load_queries(&qpath)?.into_iter().map(|q| (q.id(), q.query)).collect();
    let codes = load_codes(&cpath)?;
    let code_pairs: Vec<(String, String)> = codes
        .iter()
        .map(|c| (c.code_id.clone(), c.raw_text().to_string()))
        .collect();
    let picked = curate(&queries, &code_pairs, &model, &config)?;
    let qtext: BTreeMap<&str, &str> = queries.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
    let ctext: BTreeMap<&str, &str> = code_pairs.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
    let lines = picked.iter().map(|c| CandidateLine {
        record: PairRecord {
            pair_id: format!("{}:{}", c.query_id, c.code_id),
            query: qtext[c.query_id.as_str()].to_string(),
            code: ctext[c.code_id.as_str()].to_string(),
            label: None,
            votes: Vec::new(),
            query_id: Some(c.query_id.clone()),
            code_id: Some(c.code_id.clone()),
        },
        similarity: c.similarity,
    });
    write_jsonl(&a.out, lines)?;
    emit(&json!({ "queries": queries.len(), "codes": codes.len(), "candidates": picked.len() }), None)?;

    let mut m = RunManifest::new("curate", config, None)?;
    for p in [&ckpt, &qpath, &cpath] {
        m.input(p)?;
    }
    m.output(&a.out)?;
    ctx.finish(m, Some(&a.out))
}

pub fn train_cmd(ctx: &RunContext, a: &TrainArgs) -> Result<()> {
    let mut config: TrainConfig = match &a.config {
        Some(p) => read_json(&ctx.input(p))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        config.epochs = epochs;
    }
    if let Some(mode) = a.qra_mode {
        config.qra_mode = mode;
    }
    config.enable_iba &= !a.no_iba;
    config.enable_qra &= !a.no_qra;
    config.validate().map_err(|e| usage(e.to_string()))?;
    if a.codebase.is_some() && a.valid.is_none() {
        return Err(usage("--codebase needs --valid"));
    }

    let data = ctx.input(&a.data);
    let corpus = load_pairs(&data)?;
    let examples = corpus.examples(a.keep)?;
    let valid_path = a.valid.as_ref().map(|p| ctx.input(p));
    let codebase_path = a.codebase.as_ref().map(|p| ctx.input(p));
    let valid_corpus = valid_path.as_ref().map(load_pairs).transpose()?;
    let valid_examples = match (&valid_corpus, &codebase_path) {
        (Some(c), None) => Some(c.examples(a.keep)?),
        _ => None,
    };
    let search = match (&valid_corpus, &codebase_path) {
        (Some(c), Some(p)) => {
            let funcs = load_codes(p)?;
            Some((SearchQuery::from_corpus(c), CodeBase::from_functions(&funcs, a.keep)?))
        }
        _ => None,
    };
    let validation = match (&valid_examples, &search) {
        (Some(ex), _) => Validation::Qa(ex),
        (None, Some((queries, codebase))) => Validation::Search { queries, codebase },
        (None, None) => Validation::None,
    };

    eprintln!("training on {} pairs for {} epochs", examples.len(), config.epochs);
    let outcome = train(&config, &examples, validation)?;
    outcome.model.save(&a.out)?;
    if let Some(path) = &a.history {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        write_history(&outcome.history, &mut w)?;
        w.flush()?;
    }
    emit(
        &json!({
            "pairs": examples.len(),
            "vocabulary": outcome.model.vocab.len(),
            "best_epoch": outcome.best_epoch,
            "initial_metric": outcome.initial_metric,
            "best_metric": outcome.best_epoch.checked_sub(1).and_then(|i| outcome.history[i].valid_metric),
            "final_loss": outcome.history.last().map(|h| h.loss),
        }),
        None,
    )?;

    let mut m = RunManifest::new("train", json!({ "train": config, "keep": a.keep }), Some(config.seed))?;
    m.input(&data)?;
    for p in [&valid_path, &codebase_path].into_iter().flatten() {
        m.input(p)?;
    }
    if let Some(p) = &a.config {
        m.input(&ctx.input(p))?;
    }
    m.output(&a.out)?;
    if let Some(p) = &a.history {
        m.output(p)?;
    }
    ctx.finish(m, Some(&a.out))
}

pub fn eval(ctx: &RunContext, a: &EvalArgs) -> Result<()> {
    let common = match &a.task {
        EvalTask::Qa(q) => &q.common,
        EvalTask::Search(s) => &s.common,
    };
    let (ckpt, data) = (ctx.input(&common.checkpoint), ctx.input(&common.data));
    let model = SiameseModel::load(&ckpt)?;
    let corpus = load_pairs(&data)?;
    let mut m;
    let result = match &a.task {
        EvalTask::Qa(q) => {
            if !(0.0..=1.0).contains(&q.threshold) {
                return Err(usage("--threshold must be in [0, 1]"));
            }
            let examples = corpus.examples(common.keep)?;
            let accuracy = qa_accuracy(&model, &examples, q.threshold)?;
            m = RunManifest::new("eval qa", json!({ "threshold": q.threshold, "keep": common.keep }), None)?;
            json!({ "task": "qa", "metric": "accuracy", "value": accuracy, "percent": 100.0 * accuracy, "pairs": examples.len() })
        }
        EvalTask::Search(s) => {
            let cb_path = ctx.input(&s.codebase);
            let funcs = load_codes(&cb_path)?;
            let codebase = CodeBase::from_functions(&funcs, common.keep)?;
            let queries = SearchQuery::from_corpus(&corpus);
            let report = search_mrr(&model, &queries, &codebase)?;
            if let Some(path) = &s.details {
                write_jsonl(path, &report.results)?;
            }
            m = RunManifest::new("eval search", json!({ "keep": common.keep }), None)?;
            m.input(&cb_path)?;
            if let Some(p) = &s.details {
                m.output(p)?;
            }
            json!({ "task": "search", "metric": "mrr", "value": report.mrr, "percent": 100.0 * report.mrr, "queries": queries.len(), "codebase": codebase.len() })
        }
    };
    emit(&result, common.out.as_deref())?;
    m.input(&ckpt)?;
    m.input(&data)?;
    if let Some(p) = &common.out {
        m.output(p)?;
    }
    ctx.finish(m, common.out.as_deref())
}

pub fn alpha(ctx: &RunContext, a: &AlphaArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.min_agreement) {
        return Err(usage("--min-agreement must be in [0, 1]"));
    }
    let policy = AgreementPolicy {
        min_agreement: a.min_agreement,
        min_votes: a.min_votes,
    };
    let input = ctx.input(&a.input);
    let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
    let mut votes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: VoteRecord = serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?;
        if v.value > 1 {
            anyhow::bail!("line {}: vote value must be 0 or 1, got {}", i + 1, v.value);
        }
        votes.push(v);
    }
    let report = report_votes(&votes, &policy)?;
    emit(&serde_json::to_value(&report)?, a.out.as_deref())?;
    let mut m = RunManifest::new("alpha", policy, None)?;
    m.input(&input)?;
    if let Some(p) = &a.out {
        m.output(p)?;
    }
    ctx.finish(m, a.out.as_deref())
}

pub fn serve(ctx: &RunContext, a: &ServeArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.min_agreement) {
        return Err(usage("--min-agreement must be in [0, 1]"));
    }
    let policy = AgreementPolicy {
        min_agreement: a.min_agreement,
        ..AgreementPolicy::default()
    };
    let data = ctx.input(&a.data);
    let candidates = load_candidates(&data)?;
    let store = AnnotationStore::open(candidates, policy, &a.log)?;
    let progress = store.progress();
    let mut m = RunManifest::new("serve", json!({ "policy": policy, "host": a.host, "port": a.port }), None)?;
    m.input(&data)?;
    ctx.finish(m, Some(&a.log))?;
    let addr = SocketAddr::new(a.host, a.port);
    eprintln!(
        "serving {} pairs ({} judgments replayed) on http://{addr}",
        progress.pairs, progress.judgments
    );
    tokio::runtime::Runtime::new()?.block_on(qcmatch_annotate::serve(store, addr))?;
    Ok(())
}

pub fn parse(ctx: &RunContext, a: &ParseArgs) -> Result<()> {
    let input = ctx.input(&a.input);
    let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let f = parse_function(text.trim_end_matches('\n')).with_context(|| format!("parsing {}", input.display()))?;
    emit(
        &json!({ "header": f.header(), "docstring": f.docstring(), "body": f.body() }),
        None,
    )?;
    let mut m = RunManifest::new("parse", Value::Null, None)?;
    m.input(&input)?;
    ctx.finish(m, None)
}

pub fn strip(ctx: &RunContext, a: &StripArgs) -> Result<()> {
    let input = ctx.input(&a.input);
    let codes = load_codes(&input)?;
    let records = codes
        .iter()
        .map(|c| {
            Ok(CodeRecord {
                code_id: Some(c.code_id.clone()),
                code: strip_components(c, a.keep)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&a.out, &records)?;
    let mut m = RunManifest::new("strip", json!({ "keep": a.keep }), None)?;
    m.input(&input)?;
    m.output(&a.out)?;
    ctx.finish(m, Some(&a.out))
}

pub fn synth(ctx: &RunContext, a: &SynthArgs) -> Result<()> {
    let mut config: SynthConfig = match &a.config {
        Some(p) => read_json(&ctx.input(p))?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if a.docstring_only {
        config.placement = SignalPlacement::Docstring;
    }
    let corpus = generate(&config).map_err(|e| usage(e.to_string()))?;
    corpus.write(&a.out)?;
    emit(
        &json!({
            "train": corpus.train.len(),
            "valid": corpus.valid.len(),
            "test": corpus.test.len(),
            "codebase": corpus.codebase.len(),
        }),
        None,
    )?;
    let mut m = RunManifest::new("synth", config, Some(config.seed))?;
    if let Some(p) = &a.config {
        m.input(&ctx.input(p))?;
    }
    m.output(&a.out)?;
    ctx.finish(m, Some(&a.out))
}

pub fn stats_cmd(ctx: &RunContext, a: &StatsArgs) -> Result<()> {
    let data = ctx.input(&a.data);
    let s = stats(&load_candidates(&data)?);
    emit(&serde_json::to_value(s)?, a.out.as_deref())?;
    let mut m = RunManifest::new("stats", Value::Null, None)?;
    m.input(&data)?;
    if let Some(p) = &a.out {
        m.output(p)?;
    }
    ctx.finish(m, a.out.as_deref())
}

pub fn split(ctx: &RunContext, a: &SplitArgs) -> Result<()> {
    let mut spec = match a.task {
        TaskArg::Qa => SplitSpec::full_qa(a.seed),
        TaskArg::Search => SplitSpec::full_search(a.seed),
    };
    if let Some(counts) = &a.counts {
        spec.counts = counts.clone();
    }
    let data = ctx.input(&a.data);
    let corpus = load_pairs(&data)?;
    let splits = make_splits(&corpus.pairs, &spec).map_err(|e| match e {
        qcmatch_core::Error::InvalidSplit(m) => usage(m),
        other => other.into(),
    })?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut parts = vec![("train", &splits.train), ("valid", &splits.valid)];
    if spec.task == Task::Search {
        parts.push(("test", &splits.test));
    }
    let mut sizes = BTreeMap::new();
    for (name, pairs) in parts {
        save_pairs(&corpus, pairs, a.out.join(format!("{name}.jsonl")))?;
        sizes.insert(name, pairs.len());
    }
    emit(&serde_json::to_value(&sizes)?, None)?;
    let mut m = RunManifest::new("split", &spec, Some(a.seed))?;
    m.input(&data)?;
    m.output(&a.out)?;
    ctx.finish(m, Some(&a.out))
}

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use qcmatch_core::agreement::{majority_label, report_votes, AgreementPolicy, Step, StepReports, VoteRecord};
use qcmatch_core::corpus::{Corpus, PairRecord};
use qcmatch_core::intent::{classify, RuleSet};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

/// Answer votes after which a pair is no longer served.
pub const TARGET_VOTES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotator {
    pub annotator_id: String,
    pub name: String,
}

/// What a client posts to `/judgments`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub pair_id: String,
    pub annotator_id: String,
    pub intent: Intent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub pair_id: String,
    pub annotator_id: String,
    pub intent: Intent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<u8>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// One line of the append-only log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum LogEvent {
    Annotator(Annotator),
    Judgment(Judgment),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub pair_id: String,
    pub query: String,
    pub header: String,
    pub docstring: String,
    pub body: String,
    /// Intent-rule categories the query trips, if any.
    pub hints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub pairs: usize,
    pub complete: usize,
    pub judgments: usize,
    /// Judgments per annotator.
    pub annotators: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub pairs: Vec<PairRecord>,
    pub dropped_no_intent: Vec<String>,
    pub dropped_agreement: Vec<String>,
    pub pending: Vec<String>,
    pub report: StepReports,
}

#[derive(Debug, Default)]
struct Tally {
    voters: BTreeSet<String>,
    intent_no: usize,
    answers: usize,
}

impl Tally {
    fn complete(&self) -> bool {
        self.answers >= TARGET_VOTES || (self.voters.len() >= TARGET_VOTES && 2 * self.intent_no > self.voters.len())
    }
}

pub struct AnnotationStore {
    candidates: Corpus,
    rules: RuleSet,
    policy: AgreementPolicy,
    annotators: BTreeMap<String, Annotator>,
    judgments: Vec<Judgment>,
    tallies: HashMap<String, Tally>,
    assigned: HashMap<String, String>,
    log: Option<File>,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl AnnotationStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory(candidates: Corpus, policy: AgreementPolicy) -> Self {
        let tallies = candidates
            .pairs
            .iter()
            .map(|p| (p.pair_id.clone(), Tally::default()))
            .collect();
        AnnotationStore {
            candidates,
            rules: RuleSet::default(),
            policy,
            annotators: BTreeMap::new(),
            judgments: Vec::new(),
            tallies,
            assigned: HashMap::new(),
            log: None,
        }
    }

    /// Replays `log` if it exists, then appends to it.
    pub fn open(candidates: Corpus, policy: AgreementPolicy, log: impl AsRef<Path>) -> Result<Self> {
        let log = log.as_ref();
        let mut store = Self::in_memory(candidates, policy);
        if log.exists() {
            store.replay(BufReader::new(File::open(log)?))?;
        }
        store.log = Some(OpenOptions::new().create(true).append(true).open(log)?);
        Ok(store)
    }

    pub fn replay(&mut self, reader: impl BufRead) -> Result<()> {
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let wrap = |message: String| ServiceError::Log { line: idx + 1, message };
            let event: LogEvent = serde_json::from_str(&line).map_err(|e| wrap(e.to_string()))?;
            match event {
                LogEvent::Annotator(a) => {
                    if self.annotators.contains_key(&a.annotator_id) {
                        return Err(wrap(format!("annotator `{}` registered twice", a.annotator_id)));
                    }
                    self.annotators.insert(a.annotator_id.clone(), a);
                }
                LogEvent::Judgment(j) => {
                    self.validate(&j.pair_id, &j.annotator_id, j.intent, j.answer)
                        .map_err(|e| wrap(e.to_string()))?;
                    self.apply(j);
                }
            }
        }
        Ok(())
    }

    fn append(&mut self, event: &LogEvent) -> Result<()> {
        if let Some(file) = &mut self.log {
            let mut line = serde_json::to_vec(event)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        Ok(())
    }

    pub fn policy(&self) -> &AgreementPolicy {
        &self.policy
    }

    pub fn register(&mut self, name: &str) -> Result<Annotator> {
        let name = name.trim();
        if name.is_empty() {
            return Err(ServiceError::Protocol("annotator name is empty".into()));
        }
        let annotator = Annotator {
            annotator_id: format!("ann-{:04}", self.annotators.len() + 1),
            name: name.to_string(),
        };
        self.append(&LogEvent::Annotator(annotator.clone()))?;
        self.annotators.insert(annotator.annotator_id.clone(), annotator.clone());
        Ok(annotator)
    }

    fn check_annotator(&self, annotator_id: &str) -> Result<()> {
        if self.annotators.contains_key(annotator_id) {
            Ok(())
        } else {
            Err(ServiceError::UnknownAnnotator(annotator_id.to_string()))
        }
    }

    fn task(&self, pair_id: &str) -> AnnotationTask {
        let pair = self
            .candidates
            .pairs
            .iter()
            .find(|p| p.pair_id == pair_id)
            .expect("assigned pairs come from the pool");
        let query = &self.candidates.query(pair).raw;
        let code = self.candidates.code(pair);
        let verdict = classify(query, &self.rules);
        AnnotationTask {
            pair_id: pair_id.to_string(),
            query: query.clone(),
            header: code.header().to_string(),
            docstring: code.docstring().to_string(),
            body: code.body().to_string(),
            hints: verdict.matched_category.into_iter().collect(),
        }
    }

    /// The open pair with the fewest votes this annotator has not judged;
    /// ties go to the smallest pair_id. Repeated calls return the same task
    /// until it is judged.
    pub fn next_task(&mut self, annotator_id: &str) -> Result<Option<AnnotationTask>> {
        self.check_annotator(annotator_id)?;
        if let Some(pair_id) = self.assigned.get(annotator_id) {
            let tally = &self.tallies[pair_id];
            if !tally.complete() && !tally.voters.contains(annotator_id) {
                return Ok(Some(self.task(pair_id)));
            }
        }
        let pick = self
            .tallies
            .iter()
            .filter(|(_, t)| !t.complete() && !t.voters.contains(annotator_id))
            .min_by(|(a, ta), (b, tb)| ta.voters.len().cmp(&tb.voters.len()).then_with(|| a.cmp(b)))
            .map(|(id, _)| id.clone());
        match pick {
            Some(pair_id) => {
                let task = self.task(&pair_id);
                self.assigned.insert(annotator_id.to_string(), pair_id);
                Ok(Some(task))
            }
            None => {
                self.assigned.remove(annotator_id);
                Ok(None)
            }
        }
    }

    fn validate(&self, pair_id: &str, annotator_id: &str, intent: Intent, answer: Option<u8>) -> Result<()> {
        self.check_annotator(annotator_id)?;
        let Some(tally) = self.tallies.get(pair_id) else {
            return Err(ServiceError::Protocol(format!("unknown pair `{pair_id}`")));
        };
        match (intent, answer) {
            (Intent::No, Some(_)) => {
                return Err(ServiceError::Protocol("an answer was given for a query without code search intent".into()))
            }
            (Intent::Yes, None) => return Err(ServiceError::Protocol("intent=yes requires an answer".into())),
            (Intent::Yes, Some(a)) if a > 1 => {
                return Err(ServiceError::Protocol(format!("answer must be 0 or 1, got {a}")))
            }
            _ => {}
        }
        if tally.voters.contains(annotator_id) {
            return Err(ServiceError::Conflict(format!("`{annotator_id}` already judged `{pair_id}`")));
        }
        Ok(())
    }

    fn apply(&mut self, judgment: Judgment) {
        let tally = self.tallies.get_mut(&judgment.pair_id).expect("validated");
        tally.voters.insert(judgment.annotator_id.clone());
        match judgment.intent {
            Intent::No => tally.intent_no += 1,
            Intent::Yes => tally.answers += 1,
        }
        if self.assigned.get(&judgment.annotator_id) == Some(&judgment.pair_id) {
            self.assigned.remove(&judgment.annotator_id);
        }
        self.judgments.push(judgment);
    }

    /// Accepts a judgment on the pair currently assigned to the annotator.
    pub fn submit(&mut self, submission: Submission) -> Result<Judgment> {
        let Submission {
            pair_id,
            annotator_id,
            intent,
            answer,
        } = submission;
        self.validate(&pair_id, &annotator_id, intent, answer)?;
        if self.assigned.get(&annotator_id) != Some(&pair_id) {
            return Err(ServiceError::Conflict(format!("`{pair_id}` is not assigned to `{annotator_id}`")));
        }
        let judgment = Judgment {
            pair_id,
            annotator_id,
            intent,
            answer,
            timestamp: now_millis(),
        };
        self.append(&LogEvent::Judgment(judgment.clone()))?;
        self.apply(judgment.clone());
        Ok(judgment)
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    pub fn progress(&self) -> Progress {
        let mut annotators: BTreeMap<String, usize> = self.annotators.keys().map(|k| (k.clone(), 0)).collect();
        for j in &self.judgments {
            *annotators.entry(j.annotator_id.clone()).or_default() += 1;
        }
        Progress {
            pairs: self.tallies.len(),
            complete: self.tallies.values().filter(|t| t.complete()).count(),
            judgments: self.judgments.len(),
            annotators,
        }
    }

    /// Intent votes are 1 for yes and 0 for no.
    pub fn votes(&self) -> Vec<VoteRecord> {
        let mut out = Vec::with_capacity(2 * self.judgments.len());
        for j in &self.judgments {
            out.push(VoteRecord {
                pair_id: j.pair_id.clone(),
                annotator_id: j.annotator_id.clone(),
                step: Step::Intent,
                value: u8::from(j.intent == Intent::Yes),
            });
            if let Some(a) = j.answer {
                out.push(VoteRecord {
                    pair_id: j.pair_id.clone(),
                    annotator_id: j.annotator_id.clone(),
                    step: Step::Answer,
                    value: a,
                });
            }
        }
        out
    }

    pub fn agreement(&self) -> Result<StepReports> {
        Ok(report_votes(&self.votes(), &self.policy)?)
    }

    /// Labeled pairs in pool order. A pair whose intent votes are majority
    /// "no" is dropped; the rest go through the agreement policy on their
    /// answer votes.
    pub fn export(&self) -> Result<Export> {
        let mut intent: HashMap<&str, Vec<u8>> = HashMap::new();
        let mut answer: HashMap<&str, Vec<u8>> = HashMap::new();
        for j in &self.judgments {
            intent
                .entry(&j.pair_id)
                .or_default()
                .push(u8::from(j.intent == Intent::Yes));
            if let Some(a) = j.answer {
                answer.entry(&j.pair_id).or_default().push(a);
            }
        }
        let mut export = Export {
            pairs: Vec::new(),
            dropped_no_intent: Vec::new(),
            dropped_agreement: Vec::new(),
            pending: Vec::new(),
            report: self.agreement()?,
        };
        for pair in &self.candidates.pairs {
            let id = pair.pair_id.as_str();
            let Some(intent_votes) = intent.get(id) else {
                export.pending.push(id.to_string());
                continue;
            };
            if majority_label(intent_votes) == Some(0) {
                export.dropped_no_intent.push(id.to_string());
                continue;
            }
            let votes = answer.get(id).cloned().unwrap_or_default();
            if !self.policy.accepts(&votes) {
                export.dropped_agreement.push(id.to_string());
                continue;
            }
            let mut record = self.candidates.to_record(pair);
            record.label = majority_label(&votes);
            record.votes = votes;
            export.pairs.push(record);
        }
        Ok(export)
    }
}

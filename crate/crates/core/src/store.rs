//! Line-delimited sample corpus with lifecycle transitions, curated export and
//! statistics.
//!
//! A corpus is one JSONL file, one sample per line. Refinement histories go to
//! an adjacent `<corpus>.history.jsonl`. Appends add a line; transitions
//! rewrite the file through a temporary file and a rename.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::eval::{EvalError, EvalOptions, Evaluator};
use crate::pipeline::RefinementHistory;
use crate::predicate::FactSet;
use crate::tree::RuleTree;
use crate::validate::ValidationReport;
use crate::verify::{VerifierKind, VerifierReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Drafted,
    AutoVerified,
    Queued,
    HumanVerified,
    MetaReviewed,
    Rejected,
}

impl Status {
    pub const ALL: [Status; 6] = [
        Status::Drafted,
        Status::AutoVerified,
        Status::Queued,
        Status::HumanVerified,
        Status::MetaReviewed,
        Status::Rejected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Drafted => "drafted",
            Status::AutoVerified => "auto_verified",
            Status::Queued => "queued",
            Status::HumanVerified => "human_verified",
            Status::MetaReviewed => "meta_reviewed",
            Status::Rejected => "rejected",
        }
    }

    pub fn can_move_to(self, to: Status) -> bool {
        use Status::*;
        match (self, to) {
            (Rejected, _) => false,
            (_, Rejected) => true,
            (Drafted, AutoVerified) | (AutoVerified, Queued) | (Queued, HumanVerified) | (HumanVerified, MetaReviewed) => {
                true
            }
            _ => false,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Good,
    Bad,
}

impl Category {
    pub fn flipped(self) -> Self {
        match self {
            Category::Good => Category::Bad,
            Category::Bad => Category::Good,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanVerdict {
    pub annotator_id: String,
    /// The scenario is relevant to the target article.
    pub relevant: bool,
    /// Rules and facts are reasonably formalized from the scenario.
    pub well_formalized: bool,
    /// The resulting reasoning is logically sound.
    pub logically_sound: bool,
    pub category: Category,
    #[serde(default)]
    pub notes: String,
    pub timestamp: DateTime<Utc>,
}

impl HumanVerdict {
    pub fn check(&self) -> Result<(), String> {
        if self.annotator_id.trim().is_empty() {
            return Err("annotator_id is empty".into());
        }
        if self.category == Category::Good && !(self.relevant && self.well_formalized && self.logically_sound) {
            return Err("category good requires all three criteria to hold".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaDecision {
    Confirm,
    Overturn,
}

impl MetaDecision {
    pub fn apply(self, annotator: Category) -> Category {
        match self {
            MetaDecision::Confirm => annotator,
            MetaDecision::Overturn => annotator.flipped(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaReview {
    pub reviewer_id: String,
    pub decision: MetaDecision,
    pub final_category: Category,
    #[serde(default)]
    pub rationale: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: Uuid,
    pub article: String,
    pub scenario: String,
    pub question: String,
    pub rule_tree: RuleTree,
    pub facts: FactSet,
    pub label: bool,
    pub reports: Vec<VerifierReport>,
    pub status: Status,
    pub verdict: Option<HumanVerdict>,
    pub meta_review: Option<MetaReview>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Sample {
    /// A fresh `Drafted` sample with a new id.
    pub fn new(
        article: impl Into<String>,
        scenario: impl Into<String>,
        question: impl Into<String>,
        rule_tree: RuleTree,
        facts: FactSet,
        label: bool,
        reports: Vec<VerifierReport>,
    ) -> Self {
        let now = Utc::now();
        Self {
            id: Uuid::new_v4(),
            article: article.into(),
            scenario: scenario.into(),
            question: question.into(),
            rule_tree,
            facts,
            label,
            reports,
            status: Status::Drafted,
            verdict: None,
            meta_review: None,
            created_at: now,
            updated_at: now,
        }
    }

    pub fn with_status(mut self, status: Status) -> Self {
        self.status = status;
        self
    }

    /// The meta-reviewed category if there is one, else the annotator's.
    pub fn final_category(&self) -> Option<Category> {
        self.meta_review
            .as_ref()
            .map(|m| m.final_category)
            .or_else(|| self.verdict.as_ref().map(|v| v.category))
    }

    pub fn is_curated(&self) -> bool {
        self.status == Status::MetaReviewed
            && self.verdict.is_some()
            && self.meta_review.as_ref().is_some_and(|m| m.final_category == Category::Good)
    }

    pub fn report(&self, kind: VerifierKind) -> Option<&VerifierReport> {
        self.reports.iter().find(|r| r.kind == kind)
    }

    /// Label recomputed from the stored tree and facts.
    pub fn derive_label(&self) -> Result<bool, EvalError> {
        let evaluator = Evaluator::new(&self.rule_tree)?;
        Ok(evaluator.evaluate(&self.facts, &EvalOptions::default())?.value)
    }

    /// Checks that the payloads present match the status.
    pub fn check_lifecycle(&self) -> Result<(), String> {
        if let Some(v) = &self.verdict {
            v.check()?;
        }
        if let (Some(m), None) = (&self.meta_review, &self.verdict) {
            return Err(format!("meta review by {} without an annotator verdict", m.reviewer_id));
        }
        if let (Some(m), Some(v)) = (&self.meta_review, &self.verdict) {
            if m.decision.apply(v.category) != m.final_category {
                return Err("meta review final_category does not follow from its decision".into());
            }
        }
        let (has_verdict, has_meta) = (self.verdict.is_some(), self.meta_review.is_some());
        let ok = match self.status {
            Status::Drafted | Status::AutoVerified | Status::Queued => !has_verdict && !has_meta,
            Status::HumanVerified => has_verdict && !has_meta,
            Status::MetaReviewed => has_verdict && has_meta,
            Status::Rejected => true,
        };
        if ok {
            Ok(())
        } else {
            Err(format!(
                "status {} is inconsistent with verdict={} meta_review={}",
                self.status, has_verdict, has_meta
            ))
        }
    }
}

/// Input for a meta review; the final category is derived from the verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaInput {
    pub reviewer_id: String,
    pub decision: MetaDecision,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    None,
    Verdict(HumanVerdict),
    Meta(MetaInput),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("rule tree has {} validation error(s)", .0.errors.len())]
    InvalidTree(ValidationReport),
    #[error("sample {id}: stored label {stored} but the tree evaluates to {derived}")]
    LabelInconsistent { id: Uuid, stored: bool, derived: bool },
    #[error("sample {id}: label cannot be recomputed: {source}")]
    Unevaluable { id: Uuid, source: EvalError },
    #[error("a sample with id {0} already exists")]
    IdCollision(Uuid),
    #[error("no sample with id {0}")]
    NotFound(Uuid),
    #[error("sample {id}: illegal transition {from} -> {to}")]
    IllegalTransition { id: Uuid, from: Status, to: Status },
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn history_path(corpus: &Path) -> PathBuf {
    sibling(corpus, "history.jsonl")
}

/// `<corpus>.<suffix>` next to the corpus file.
pub fn sibling(corpus: &Path, suffix: &str) -> PathBuf {
    let mut name = corpus.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    corpus.with_file_name(name)
}

/// An in-memory view of a corpus file. Writers must be serialized by the
/// caller; every method that mutates persists before returning.
#[derive(Debug)]
pub struct Corpus {
    path: PathBuf,
    samples: Vec<Sample>,
    index: HashMap<Uuid, usize>,
}

impl Corpus {
    /// Loads the corpus; a missing file is an empty corpus.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let samples = match File::open(&path) {
            Ok(f) => read_samples(&path, f)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if index.insert(s.id, i).is_some() {
                return Err(StoreError::Corrupt { path, line: i + 1, message: format!("duplicate id {}", s.id) });
            }
        }
        Ok(Self { path, samples, index })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: Uuid) -> Option<&Sample> {
        self.index.get(&id).map(|&i| &self.samples[i])
    }

    pub fn append(&mut self, sample: Sample) -> Result<Uuid, StoreError> {
        check_sample(&sample)?;
        if self.index.contains_key(&sample.id) {
            return Err(StoreError::IdCollision(sample.id));
        }
        let line = serde_json::to_string(&sample).expect("samples always serialize");
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io_err(&self.path))?;
        writeln!(file, "{line}").map_err(io_err(&self.path))?;
        file.sync_data().map_err(io_err(&self.path))?;
        let id = sample.id;
        self.index.insert(id, self.samples.len());
        self.samples.push(sample);
        Ok(id)
    }

    pub fn transition(&mut self, id: Uuid, to: Status, payload: Payload) -> Result<Sample, StoreError> {
        let &i = self.index.get(&id).ok_or(StoreError::NotFound(id))?;
        let current = &self.samples[i];
        if !current.status.can_move_to(to) {
            return Err(StoreError::IllegalTransition { id, from: current.status, to });
        }
        let mut next = current.clone();
        let now = Utc::now();
        match (to, payload) {
            (Status::HumanVerified, Payload::Verdict(verdict)) => {
                verdict.check().map_err(StoreError::InvalidPayload)?;
                next.verdict = Some(verdict);
            }
            (Status::MetaReviewed, Payload::Meta(input)) => {
                if input.reviewer_id.trim().is_empty() {
                    return Err(StoreError::InvalidPayload("reviewer_id is empty".into()));
                }
                let annotator = next
                    .verdict
                    .as_ref()
                    .map(|v| v.category)
                    .ok_or_else(|| StoreError::InvalidPayload("sample has no annotator verdict".into()))?;
                next.meta_review = Some(MetaReview {
                    reviewer_id: input.reviewer_id,
                    decision: input.decision,
                    final_category: input.decision.apply(annotator),
                    rationale: input.rationale,
                    timestamp: now,
                });
            }
            (Status::HumanVerified, _) => {
                return Err(StoreError::InvalidPayload("moving to human_verified needs a verdict".into()))
            }
            (Status::MetaReviewed, _) => {
                return Err(StoreError::InvalidPayload("moving to meta_reviewed needs a meta review".into()))
            }
            (_, Payload::None) => {}
            (to, _) => return Err(StoreError::InvalidPayload(format!("moving to {to} takes no payload"))),
        }
        next.status = to;
        next.updated_at = now;

        let previous = std::mem::replace(&mut self.samples[i], next);
        if let Err(e) = self.rewrite() {
            self.samples[i] = previous;
            return Err(e);
        }
        Ok(self.samples[i].clone())
    }

    fn rewrite(&self) -> Result<(), StoreError> {
        let tmp = sibling(&self.path, "tmp");
        {
            let file = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut w = BufWriter::new(file);
            write_lines(&mut w, self.samples.iter()).map_err(io_err(&tmp))?;
            let file = w.into_inner().map_err(|e| io_err(&tmp)(e.into_error()))?;
            file.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &self.path).map_err(io_err(&self.path))
    }

    pub fn curated(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.is_curated())
    }

    /// Writes the curated subset as JSONL to `writer`; returns the count.
    pub fn write_curated(&self, writer: &mut impl Write) -> io::Result<usize> {
        write_lines(writer, self.curated())
    }

    pub fn export_curated(&self, destination: &Path) -> Result<usize, StoreError> {
        let file = File::create(destination).map_err(io_err(destination))?;
        let mut w = BufWriter::new(file);
        let n = self.write_curated(&mut w).map_err(io_err(destination))?;
        w.flush().map_err(io_err(destination))?;
        Ok(n)
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(&self.samples)
    }

    pub fn history_path(&self) -> PathBuf {
        history_path(&self.path)
    }

    pub fn append_history(&self, history: &RefinementHistory) -> Result<(), StoreError> {
        let path = self.history_path();
        let line = serde_json::to_string(history).expect("histories always serialize");
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        writeln!(file, "{line}").map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))
    }

    pub fn histories(&self) -> Result<Vec<RefinementHistory>, StoreError> {
        let path = self.history_path();
        match File::open(&path) {
            Ok(f) => read_lines(&path, f),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

fn write_lines<'a>(w: &mut impl Write, samples: impl Iterator<Item = &'a Sample>) -> io::Result<usize> {
    let mut n = 0;
    for s in samples {
        serde_json::to_writer(&mut *w, s)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path, file: File) -> Result<Vec<T>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

fn read_samples(path: &Path, file: File) -> Result<Vec<Sample>, StoreError> {
    let samples: Vec<Sample> = read_lines(path, file)?;
    for (i, s) in samples.iter().enumerate() {
        s.check_lifecycle().map_err(|message| StoreError::Corrupt { path: path.to_path_buf(), line: i + 1, message })?;
    }
    Ok(samples)
}

/// The write-time guards: a valid tree, a self-consistent label and payloads
/// that fit the status.
pub fn check_sample(sample: &Sample) -> Result<(), StoreError> {
    let evaluator = Evaluator::new(&sample.rule_tree).map_err(|e| match e {
        EvalError::InvalidTree(r) => StoreError::InvalidTree(r),
        other => StoreError::Unevaluable { id: sample.id, source: other },
    })?;
    let derived = evaluator
        .evaluate(&sample.facts, &EvalOptions::default())
        .map_err(|source| StoreError::Unevaluable { id: sample.id, source })?
        .value;
    if derived != sample.label {
        return Err(StoreError::LabelInconsistent { id: sample.id, stored: sample.label, derived });
    }
    sample.check_lifecycle().map_err(StoreError::InvalidPayload)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub good: usize,
    pub bad: usize,
}

impl CategoryCounts {
    fn add(&mut self, c: Category) {
        match c {
            Category::Good => self.good += 1,
            Category::Bad => self.bad += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub count: usize,
    pub min: u8,
    pub max: u8,
    pub mean: f64,
    /// Bucket `i` counts scores in `[10i, 10i + 9]`; the last bucket is 100.
    pub histogram: [usize; 11],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub by_status: BTreeMap<Status, usize>,
    pub by_article: BTreeMap<String, usize>,
    /// Categories as assigned by annotators.
    pub annotator_categories: CategoryCounts,
    /// Categories after meta review where there is one.
    pub final_categories: CategoryCounts,
    pub curated: usize,
    pub scores: BTreeMap<VerifierKind, ScoreStats>,
}

pub fn corpus_stats(samples: &[Sample]) -> CorpusStats {
    let mut stats = CorpusStats { total: samples.len(), ..Default::default() };
    let mut sums: BTreeMap<VerifierKind, u64> = BTreeMap::new();
    for s in samples {
        *stats.by_status.entry(s.status).or_default() += 1;
        *stats.by_article.entry(s.article.clone()).or_default() += 1;
        if let Some(v) = &s.verdict {
            stats.annotator_categories.add(v.category);
        }
        if let Some(c) = s.final_category() {
            stats.final_categories.add(c);
        }
        if s.is_curated() {
            stats.curated += 1;
        }
        for r in &s.reports {
            let e = stats.scores.entry(r.kind).or_insert(ScoreStats {
                count: 0,
                min: u8::MAX,
                max: 0,
                mean: 0.0,
                histogram: [0; 11],
            });
            e.count += 1;
            e.min = e.min.min(r.score);
            e.max = e.max.max(r.score);
            e.histogram[(r.score as usize / 10).min(10)] += 1;
            *sums.entry(r.kind).or_default() += r.score as u64;
        }
    }
    for (kind, e) in stats.scores.iter_mut() {
        e.mean = sums[kind] as f64 / e.count as f64;
    }
    stats
}

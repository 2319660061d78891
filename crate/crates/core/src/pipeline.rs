//! Drafter/verifier refinement loop.
//!
//! Each iteration asks the drafter for a sample, derives its label, runs the
//! four verifiers and aggregates their scores. A passing sample with a
//! derivable label ends the loop; otherwise the labelled feedback of that
//! round is handed to the next draft.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use uuid::Uuid;

use crate::agent::{AgentClient, AgentError};
use crate::eval::{EvalError, EvalOptions, Evaluator, DEFAULT_STEP_BUDGET};
use crate::lint::LintConfig;
use crate::predicate::FactSet;
use crate::store::{Sample, Status};
use crate::templates::Templates;
use crate::tree::{ParseError, RuleTree};
use crate::verify::{aggregate, Candidate, QualityAssessment, VerifierSet, DEFAULT_THRESHOLD};

pub const DEFAULT_MAX_ITERATIONS: usize = 5;

/// One drafter output, parsed into its parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftSample {
    pub article_ref: String,
    pub scenario: String,
    pub question: String,
    pub rule_tree_doc: String,
    pub facts_doc: String,
    pub facts: FactSet,
    pub scenario_words: usize,
}

impl DraftSample {
    pub fn candidate(&self, label: Option<bool>) -> Candidate<'_> {
        Candidate {
            article: &self.article_ref,
            scenario: &self.scenario,
            question: &self.question,
            rule_tree: &self.rule_tree_doc,
            facts: &self.facts,
            label,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum PipelineError {
    #[error("drafter reply unusable after retry: {0}")]
    DraftFailed(String),
    #[error("drafter agent unavailable: {0}")]
    AgentUnavailable(AgentError),
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("rule tree does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

const SECTIONS: [&str; 4] = ["SCENARIO", "QUESTION", "RULE_TREE", "FACTS"];

/// Splits a drafter reply into `### NAME` sections and parses them.
pub fn parse_draft_reply(article_ref: &str, reply: &str) -> Result<DraftSample, String> {
    let mut bodies: [Option<Vec<&str>>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in reply.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("###") {
            let name = rest.trim().trim_end_matches(':').to_ascii_uppercase().replace(' ', "_");
            if let Some(i) = SECTIONS.iter().position(|s| *s == name) {
                if bodies[i].is_some() {
                    return Err(format!("section {} appears more than once", SECTIONS[i]));
                }
                bodies[i] = Some(Vec::new());
                current = Some(i);
                continue;
            }
        }
        if let Some(i) = current {
            if !trimmed.starts_with("```") {
                bodies[i].as_mut().expect("current section exists").push(line);
            }
        }
    }
    let text = |i: usize| bodies[i].as_ref().map(|lines| lines.join("\n").trim().to_string());
    let scenario_text = text(0).filter(|s| !s.is_empty()).ok_or("missing SCENARIO section")?;
    let tree_doc = text(2).filter(|s| !s.is_empty()).ok_or("missing RULE_TREE section")?;
    let facts_doc = text(3).filter(|s| !s.is_empty()).ok_or("missing FACTS section")?;

    let (scenario, question) = match text(1).filter(|q| !q.is_empty()) {
        Some(q) => (scenario_text, q),
        None => split_question(&scenario_text).ok_or("scenario does not end with a yes/no question")?,
    };
    if !question.trim_end().ends_with('?') {
        return Err("question does not end with `?`".into());
    }
    // Schema problems are left for the Representation verifier to score.
    serde_json::from_str::<Value>(&tree_doc).map_err(|e| format!("RULE_TREE is not valid JSON: {e}"))?;
    let facts = FactSet::parse(&facts_doc).map_err(|e| format!("FACTS: {e}"))?;

    let scenario_words = scenario.split_whitespace().count() + question.split_whitespace().count();
    Ok(DraftSample {
        article_ref: article_ref.to_string(),
        scenario,
        question,
        rule_tree_doc: tree_doc,
        facts_doc,
        facts,
        scenario_words,
    })
}

/// The last sentence ending in `?` becomes the question; what precedes it is
/// the scenario.
fn split_question(text: &str) -> Option<(String, String)> {
    let end = text.rfind('?')?;
    let head = &text[..end];
    let start = head
        .rfind(['.', '!', '?', '\n'])
        .map(|i| i + 1)
        .unwrap_or(0);
    let question = text[start..=end].trim().to_string();
    let mut scenario = text[..start].trim().to_string();
    let tail = text[end + 1..].trim();
    if !tail.is_empty() {
        scenario = format!("{scenario}\n{tail}").trim().to_string();
    }
    if question.is_empty() {
        return None;
    }
    Some((scenario, question))
}

/// The drafter's context block: the article, plus the previous round's
/// feedback when there is one.
pub fn drafter_context(article_ref: &str, prior_feedback: Option<&str>) -> String {
    let mut context = format!("ARTICLE: {article_ref}\n");
    if let Some(feedback) = prior_feedback {
        context.push_str("\nFEEDBACK FROM THE PREVIOUS ROUND:\n");
        context.push_str(feedback);
        context.push('\n');
    }
    context
}

pub fn draft(
    article_ref: &str,
    prior_feedback: Option<&str>,
    agent: &dyn AgentClient,
    templates: &Templates,
) -> Result<DraftSample, PipelineError> {
    let instruction = templates.drafter_instruction(article_ref);
    let context = drafter_context(article_ref, prior_feedback);
    let mut last = String::new();
    for _ in 0..2 {
        let reply = agent.send(&instruction, &context).map_err(PipelineError::AgentUnavailable)?;
        match parse_draft_reply(article_ref, &reply) {
            Ok(d) => return Ok(d),
            Err(why) => {
                tracing::debug!(%why, "drafter reply rejected");
                last = why;
            }
        }
    }
    Err(PipelineError::DraftFailed(last))
}

pub fn derive_label(draft: &DraftSample) -> Result<bool, LabelError> {
    let tree = RuleTree::parse(&draft.rule_tree_doc)?;
    let evaluator = Evaluator::new(&tree)?;
    Ok(evaluator.evaluate(&draft.facts, &EvalOptions::default())?.value)
}

#[derive(Debug, Clone)]
pub struct RefineConfig {
    pub threshold: u32,
    pub max_iterations: usize,
    /// Step budget for the Logical verifier.
    pub budget: usize,
    pub lint: LintConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            budget: DEFAULT_STEP_BUDGET,
            lint: LintConfig::default(),
        }
    }
}

/// The drafter and the two agent-backed verifiers.
#[derive(Clone, Copy)]
pub struct Agents<'a> {
    pub drafter: &'a dyn AgentClient,
    pub scenario: &'a dyn AgentClient,
    pub legal: &'a dyn AgentClient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    /// Counts from 1.
    pub index: usize,
    pub draft: Option<DraftSample>,
    pub label: Option<bool>,
    pub assessment: Option<QualityAssessment>,
    /// What was passed to the next draft.
    pub feedback: String,
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Accepted { iteration: usize },
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementHistory {
    pub id: Uuid,
    pub article: String,
    /// The accepted sample, if any.
    pub sample_id: Option<Uuid>,
    pub iterations: Vec<Iteration>,
    pub outcome: Outcome,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RefinementHistory {
    pub fn drafter_rounds(&self) -> usize {
        self.iterations.len()
    }
}

/// Labelled concatenation of the verifier feedback of one round.
pub fn feedback_digest(assessment: &QualityAssessment) -> String {
    let mut out = String::new();
    for r in &assessment.reports {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("[{} verifier, score {}]\n{}\n", r.kind, r.score, r.feedback.trim_end()));
    }
    out
}

pub fn refine_loop(
    article_ref: &str,
    config: &RefineConfig,
    agents: Agents<'_>,
    templates: &Templates,
) -> (Option<Sample>, RefinementHistory) {
    let started_at = Utc::now();
    let verifiers = VerifierSet {
        scenario_agent: agents.scenario,
        legal_agent: agents.legal,
        templates,
        lint: &config.lint,
        budget: config.budget,
    };
    let mut iterations: Vec<Iteration> = Vec::new();
    let mut accepted: Option<Sample> = None;
    let mut prior: Option<String> = None;

    for index in 1..=config.max_iterations {
        let span = tracing::info_span!("iteration", article = article_ref, index);
        let _guard = span.enter();

        let draft = match draft(article_ref, prior.as_deref(), agents.drafter, templates) {
            Ok(d) => d,
            Err(e) => {
                let degraded = matches!(e, PipelineError::AgentUnavailable(_));
                let feedback = format!("[drafter]\nthe previous reply could not be used: {e}\n");
                iterations.push(Iteration { index, draft: None, label: None, assessment: None, feedback: feedback.clone(), degraded });
                prior = Some(feedback);
                continue;
            }
        };
        let label = derive_label(&draft).ok();
        let round = verifiers.run(&draft.candidate(label));
        let assessment = aggregate(&round.reports, config.threshold).expect("a round yields one report per kind");
        let feedback = feedback_digest(&assessment);
        let degraded = !round.unavailable.is_empty() || assessment.is_degraded();
        tracing::info!(average = assessment.average_f64(), passed = assessment.passed, "round scored");

        if assessment.passed && round.unavailable.is_empty() {
            if let Some(label) = label {
                let tree = RuleTree::parse(&draft.rule_tree_doc).expect("label derivation parsed the tree");
                accepted = Some(
                    Sample::new(
                        article_ref,
                        draft.scenario.clone(),
                        draft.question.clone(),
                        tree,
                        draft.facts.clone(),
                        label,
                        assessment.reports.clone(),
                    )
                    .with_status(Status::AutoVerified),
                );
            }
        }
        let done = accepted.is_some();
        iterations.push(Iteration { index, draft: Some(draft), label, assessment: Some(assessment), feedback: feedback.clone(), degraded });
        if done {
            break;
        }
        prior = Some(feedback);
    }

    let outcome = match &accepted {
        Some(_) => Outcome::Accepted { iteration: iterations.len() },
        None => Outcome::Exhausted,
    };
    let history = RefinementHistory {
        id: Uuid::new_v4(),
        article: article_ref.to_string(),
        sample_id: accepted.as_ref().map(|s| s.id),
        iterations,
        outcome,
        started_at,
        finished_at: Utc::now(),
    };
    (accepted, history)
}

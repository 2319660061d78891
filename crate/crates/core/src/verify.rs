//! The four verifiers, score aggregation and the pass/fail gate.

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{AgentClient, AgentError};
use crate::eval::{EvalError, EvalOptions, Evaluator, DEFAULT_STEP_BUDGET};
use crate::lint::{lint, Finding, LintConfig, LintSubject, Severity};
use crate::predicate::FactSet;
use crate::templates::{AgentRole, Templates};
use crate::tree::RuleTree;
use crate::validate::{validate, IssueCode};

pub const DEFAULT_THRESHOLD: u32 = 70;

pub const DEDUCT_ERROR: u32 = 15;
pub const DEDUCT_WARNING: u32 = 10;
pub const DEDUCT_INFO: u32 = 2;

/// Attempts made against an agent before giving up on a reply.
pub const AGENT_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierKind {
    Scenario,
    Representation,
    Logical,
    Legal,
}

impl VerifierKind {
    pub const ALL: [VerifierKind; 4] = [
        VerifierKind::Scenario,
        VerifierKind::Representation,
        VerifierKind::Logical,
        VerifierKind::Legal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerifierKind::Scenario => "scenario",
            VerifierKind::Representation => "representation",
            VerifierKind::Logical => "logical",
            VerifierKind::Legal => "legal",
        }
    }

    /// The agent role backing this verifier, if it is agent-backed.
    pub fn agent_role(self) -> Option<AgentRole> {
        match self {
            VerifierKind::Scenario => Some(AgentRole::Scenario),
            VerifierKind::Legal => Some(AgentRole::Legal),
            VerifierKind::Representation | VerifierKind::Logical => None,
        }
    }
}

impl fmt::Display for VerifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub kind: VerifierKind,
    pub score: u8,
    pub feedback: String,
    pub elapsed: Duration,
    pub degraded: bool,
}

impl VerifierReport {
    pub fn new(kind: VerifierKind, score: u32, feedback: impl Into<String>) -> Self {
        let mut feedback = feedback.into();
        if feedback.trim().is_empty() {
            feedback = "(no feedback)".to_string();
        }
        Self { kind, score: score.min(100) as u8, feedback, elapsed: Duration::ZERO, degraded: false }
    }

    fn degraded(mut self) -> Self {
        self.degraded = true;
        self
    }

    fn timed(mut self, started: Instant) -> Self {
        self.elapsed = started.elapsed();
        self
    }
}

/// What the verifiers look at: the sample with its rule tree still in
/// document form, so an unparseable tree can be scored rather than refused.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub article: &'a str,
    pub scenario: &'a str,
    pub question: &'a str,
    pub rule_tree: &'a str,
    pub facts: &'a FactSet,
    pub label: Option<bool>,
}

impl Candidate<'_> {
    /// The context block sent to agent-backed verifiers.
    pub fn agent_context(&self) -> String {
        let label = match self.label {
            Some(true) => "true",
            Some(false) => "false",
            None => "(none)",
        };
        format!(
            "ARTICLE: {}\n\nSCENARIO:\n{}\n\nQUESTION:\n{}\n\nRULE_TREE:\n{}\n\nFACTS:\n{}\n\nDERIVED_LABEL: {}\n",
            self.article,
            self.scenario.trim(),
            self.question.trim(),
            self.rule_tree.trim(),
            self.facts.to_json_string(),
            label
        )
    }
}

pub fn verify_representation(candidate: &Candidate<'_>, config: &LintConfig) -> VerifierReport {
    let started = Instant::now();
    let kind = VerifierKind::Representation;
    let tree = match RuleTree::parse(candidate.rule_tree) {
        Ok(t) => t,
        Err(e) => {
            return VerifierReport::new(kind, 0, format!("rule tree does not parse: {e}")).timed(started)
        }
    };
    let report = validate(&tree);
    if !report.is_ok() {
        let mut feedback = String::from("rule tree fails validation:\n");
        for issue in &report.errors {
            feedback.push_str(&format!("- {issue}\n"));
        }
        return VerifierReport::new(kind, 0, feedback).timed(started);
    }

    let findings = lint(
        LintSubject {
            tree: &tree,
            facts: candidate.facts,
            label: candidate.label,
            question: candidate.question,
        },
        config,
    );
    // Unreachable heads are reported by lint as well.
    let warnings: Vec<_> = report.warnings.iter().filter(|w| w.code != IssueCode::Unreachable).collect();

    let mut deduction = DEDUCT_WARNING * warnings.len() as u32;
    for f in &findings {
        deduction += severity_deduction(f);
    }
    let score = 100u32.saturating_sub(deduction);

    let mut feedback = String::new();
    if warnings.is_empty() && findings.is_empty() {
        feedback.push_str("rule tree is well-formed; no findings");
    } else {
        feedback.push_str(&format!("score {score}: deductions for {} issue(s)\n", warnings.len() + findings.len()));
        for w in &warnings {
            feedback.push_str(&format!("- [-{DEDUCT_WARNING}] {w}\n"));
        }
        for f in &findings {
            feedback.push_str(&format!("- [-{}] {} {}: {}", severity_deduction(f), f.rule_id, f.location, f.message));
            if let Some(s) = &f.suggestion {
                feedback.push_str(&format!(" (suggested: {s})"));
            }
            feedback.push('\n');
        }
    }
    VerifierReport::new(kind, score, feedback).timed(started)
}

fn severity_deduction(f: &Finding) -> u32 {
    match f.severity {
        Severity::Error => DEDUCT_ERROR,
        Severity::Warning => DEDUCT_WARNING,
        Severity::Info => DEDUCT_INFO,
    }
}

pub fn verify_logical(candidate: &Candidate<'_>, budget: usize) -> VerifierReport {
    let started = Instant::now();
    let kind = VerifierKind::Logical;
    let fail = |msg: String| VerifierReport::new(kind, 0, msg).timed(started);

    let tree = match RuleTree::parse(candidate.rule_tree) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot re-evaluate: rule tree does not parse: {e}")),
    };
    let Some(stored) = candidate.label else {
        return fail("cannot check consistency: sample has no stored label".into());
    };
    let evaluator = match Evaluator::new(&tree) {
        Ok(ev) => ev,
        Err(e) => return fail(format!("cannot re-evaluate: {e}")),
    };
    let options = EvalOptions::default().with_budget(budget);
    match evaluator.evaluate(candidate.facts, &options) {
        Ok(result) => {
            let trace = result.trace.render(&tree, &result.target);
            if result.value == stored {
                VerifierReport::new(
                    kind,
                    100,
                    format!("re-evaluation yields {} which matches the stored label\n{trace}", result.value),
                )
                .timed(started)
            } else {
                fail(format!(
                    "re-evaluation yields {} but the stored label is {stored}\n{trace}",
                    result.value
                ))
            }
        }
        Err(e @ EvalError::BudgetExceeded { .. }) => {
            fail(format!("re-evaluation did not finish: {e}")).degraded()
        }
        Err(e) => fail(format!("re-evaluation failed: {e}")),
    }
}

/// A parsed agent verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentVerdict {
    pub score: u8,
    pub feedback: String,
    pub clamped_from: Option<i64>,
}

/// Reads `{"score": <int>, "feedback": <text>}` out of an agent reply. Text
/// around the object (code fences, preambles) is ignored.
pub fn parse_agent_verdict(reply: &str) -> Result<AgentVerdict, String> {
    let (Some(start), Some(end)) = (reply.find('{'), reply.rfind('}')) else {
        return Err("reply contains no JSON object".into());
    };
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    let value: Value = serde_json::from_str(&reply[start..=end]).map_err(|e| format!("reply is not valid JSON: {e}"))?;
    let raw = match value.get("score") {
        Some(Value::Number(n)) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i,
            (None, Some(f)) if f.fract() == 0.0 && f.is_finite() => f as i64,
            _ => return Err(format!("score {n} is not an integer")),
        },
        Some(other) => return Err(format!("score must be an integer, found {other}")),
        None => return Err("reply has no `score` field".into()),
    };
    let feedback = match value.get("feedback") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        Some(Value::String(_)) => return Err("feedback is empty".into()),
        Some(_) => return Err("feedback must be a string".into()),
        None => return Err("reply has no `feedback` field".into()),
    };
    let score = raw.clamp(0, 100) as u8;
    Ok(AgentVerdict { score, feedback, clamped_from: (score as i64 != raw).then_some(raw) })
}

/// The agent could not be reached on any attempt. `fallback` is the degraded
/// zero-score report to use if the caller chooses to carry on.
#[derive(Debug, Clone, Error)]
#[error("{kind} verifier agent unavailable: {cause}")]
pub struct AgentUnavailable {
    pub kind: VerifierKind,
    pub cause: AgentError,
    pub fallback: VerifierReport,
}

pub fn verify_with_agent(
    kind: VerifierKind,
    candidate: &Candidate<'_>,
    agent: &dyn AgentClient,
    templates: &Templates,
) -> Result<VerifierReport, AgentUnavailable> {
    let started = Instant::now();
    let role = kind
        .agent_role()
        .unwrap_or_else(|| panic!("{kind} is not an agent-backed verifier"));
    let instruction = templates.get(role);
    let context = candidate.agent_context();

    let mut transport: Option<AgentError> = None;
    let mut malformed: Option<String> = None;
    for _ in 0..AGENT_ATTEMPTS {
        match agent.send(instruction, &context) {
            Err(e) => transport = Some(e),
            Ok(text) => match parse_agent_verdict(&text) {
                Ok(v) => {
                    let feedback = match v.clamped_from {
                        Some(raw) => format!("{}\n(warning: score {raw} clamped to {})", v.feedback, v.score),
                        None => v.feedback,
                    };
                    return Ok(VerifierReport::new(kind, v.score as u32, feedback).timed(started));
                }
                Err(why) => malformed = Some(why),
            },
        }
    }
    match (malformed, transport) {
        (Some(why), _) => Ok(VerifierReport::new(kind, 0, format!("agent reply unusable after {AGENT_ATTEMPTS} attempts: {why}"))
            .degraded()
            .timed(started)),
        (None, Some(cause)) => {
            let fallback = VerifierReport::new(kind, 0, format!("agent unavailable: {cause}"))
                .degraded()
                .timed(started);
            Err(AgentUnavailable { kind, cause, fallback })
        }
        (None, None) => unreachable!("at least one attempt is made"),
    }
}

/// Agents and settings for one verification round.
pub struct VerifierSet<'a> {
    pub scenario_agent: &'a dyn AgentClient,
    pub legal_agent: &'a dyn AgentClient,
    pub templates: &'a Templates,
    pub lint: &'a LintConfig,
    pub budget: usize,
}

#[derive(Debug, Clone)]
pub struct Round {
    /// One report per kind, in [`VerifierKind::ALL`] order.
    pub reports: Vec<VerifierReport>,
    pub unavailable: Vec<AgentUnavailable>,
}

impl VerifierSet<'_> {
    /// Runs all four verifiers concurrently. Unreachable agents contribute
    /// their degraded fallback report and are listed in `unavailable`.
    pub fn run(&self, candidate: &Candidate<'_>) -> Round {
        let (scenario, legal, representation, logical) = std::thread::scope(|s| {
            let scenario = s.spawn(|| {
                verify_with_agent(VerifierKind::Scenario, candidate, self.scenario_agent, self.templates)
            });
            let legal =
                s.spawn(|| verify_with_agent(VerifierKind::Legal, candidate, self.legal_agent, self.templates));
            let representation = s.spawn(|| verify_representation(candidate, self.lint));
            let logical = verify_logical(candidate, self.budget);
            (
                scenario.join().expect("scenario verifier panicked"),
                legal.join().expect("legal verifier panicked"),
                representation.join().expect("representation verifier panicked"),
                logical,
            )
        });
        let mut unavailable = Vec::new();
        let mut settle = |r: Result<VerifierReport, AgentUnavailable>| match r {
            Ok(report) => report,
            Err(u) => {
                let report = u.fallback.clone();
                unavailable.push(u);
                report
            }
        };
        let scenario = settle(scenario);
        let legal = settle(legal);
        Round { reports: vec![scenario, representation, logical, legal], unavailable }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("missing report(s) for {}", join_kinds(.0))]
    MissingVerifier(Vec<VerifierKind>),
    #[error("more than one report for {0}")]
    DuplicateVerifier(VerifierKind),
}

fn join_kinds(kinds: &[VerifierKind]) -> String {
    kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
}

/// Four reports, their exact mean and the gate decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualityAssessment {
    /// Sorted by kind.
    pub reports: Vec<VerifierReport>,
    pub average: Ratio<u32>,
    pub threshold: u32,
    pub passed: bool,
}

impl QualityAssessment {
    pub fn average_f64(&self) -> f64 {
        *self.average.numer() as f64 / *self.average.denom() as f64
    }

    pub fn report(&self, kind: VerifierKind) -> Option<&VerifierReport> {
        self.reports.iter().find(|r| r.kind == kind)
    }

    pub fn is_degraded(&self) -> bool {
        self.reports.iter().any(|r| r.degraded)
    }
}

pub fn aggregate(reports: &[VerifierReport], threshold: u32) -> Result<QualityAssessment, AggregateError> {
    let mut seen = BTreeSet::new();
    for r in reports {
        if !seen.insert(r.kind) {
            return Err(AggregateError::DuplicateVerifier(r.kind));
        }
    }
    let missing: Vec<_> = VerifierKind::ALL.into_iter().filter(|k| !seen.contains(k)).collect();
    if !missing.is_empty() {
        return Err(AggregateError::MissingVerifier(missing));
    }
    let mut reports = reports.to_vec();
    reports.sort_by_key(|r| r.kind);
    let total: u32 = reports.iter().map(|r| r.score as u32).sum();
    let average = Ratio::new(total, reports.len() as u32);
    let passed = average >= Ratio::from_integer(threshold);
    Ok(QualityAssessment { reports, average, threshold, passed })
}

#[derive(Serialize, Deserialize)]
struct AssessmentWire {
    reports: Vec<VerifierReport>,
    average: f64,
    threshold: u32,
    passed: bool,
}

impl Serialize for QualityAssessment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        AssessmentWire {
            reports: self.reports.clone(),
            average: self.average_f64(),
            threshold: self.threshold,
            passed: self.passed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QualityAssessment {
    /// The mean and gate decision are recomputed from the reports.
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = AssessmentWire::deserialize(d)?;
        aggregate(&wire.reports, wire.threshold).map_err(serde::de::Error::custom)
    }
}

/// Default budget for the Logical verifier's re-evaluation.
pub const LOGICAL_BUDGET: usize = DEFAULT_STEP_BUDGET;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ScriptedAgent, ScriptedReply};

    const ART20: &str = r#"{"p": "gdpr_art20_data_portability", "op": "ALL",
        "conditions": ["data_subject_requests_portability", "data_is_personal_data_of_subject",
                       "processing_based_on_consent_or_contract", "processing_is_automated"],
        "exceptions": ["adversely_affects_others_rights"]}"#;

    fn full_facts() -> FactSet {
        FactSet::parse(
            r#"["data_subject_requests_portability", "data_is_personal_data_of_subject",
                "processing_based_on_consent_or_contract", "processing_is_automated"]"#,
        )
        .unwrap()
    }

    fn candidate<'a>(tree: &'a str, facts: &'a FactSet, label: Option<bool>) -> Candidate<'a> {
        Candidate {
            article: "GDPR Art. 20",
            scenario: "A customer asks an online retailer for their purchase history.",
            question: "Must the retailer provide the data in a portable format?",
            rule_tree: tree,
            facts,
            label,
        }
    }

    fn reports(scores: [u8; 4]) -> Vec<VerifierReport> {
        VerifierKind::ALL
            .into_iter()
            .zip(scores)
            .map(|(k, s)| VerifierReport::new(k, s as u32, "ok"))
            .collect()
    }

    #[test]
    fn representation_clean_sample_scores_full() {
        let facts = full_facts();
        let r = verify_representation(&candidate(ART20, &facts, Some(true)), &LintConfig::default());
        assert_eq!(r.score, 100, "{}", r.feedback);
    }

    #[test]
    fn representation_zero_on_bad_op_and_validation_error() {
        let facts = full_facts();
        let bad_op = r#"{"p":"a","op":"OR","conditions":["b"]}"#;
        assert_eq!(verify_representation(&candidate(bad_op, &facts, None), &LintConfig::default()).score, 0);
        let overlap = r#"{"p":"x","op":"ALL","conditions":["y"],"exceptions":["y"]}"#;
        let r = verify_representation(&candidate(overlap, &facts, None), &LintConfig::default());
        assert_eq!(r.score, 0);
        assert!(r.feedback.contains("OVERLAP"), "{}", r.feedback);
    }

    #[test]
    fn representation_chain_sample_scores_eighty() {
        let tree = r#"[
            {"p": "no_a9_exception_applies", "op": "ALL", "conditions": ["no_a9_grounds_true"]},
            {"p": "no_a9_grounds_true", "op": "ALL", "conditions": ["not_any_a9_ground_true"]},
            {"p": "not_any_a9_ground_true", "op": "ALL",
             "conditions": ["explicit_consent_absent", "employment_law_basis_absent"]}]"#;
        let facts = FactSet::parse(r#"["explicit_consent_absent", "employment_law_basis_absent"]"#).unwrap();
        let r = verify_representation(&candidate(tree, &facts, Some(true)), &LintConfig::default());
        assert_eq!(r.score, 80, "{}", r.feedback);
        assert_eq!(r.feedback.matches("L1").count(), 2);
    }

    #[test]
    fn logical_matches_and_mismatches() {
        let facts = full_facts();
        let ok = verify_logical(&candidate(ART20, &facts, Some(true)), LOGICAL_BUDGET);
        assert_eq!(ok.score, 100);
        assert!(ok.feedback.contains("gdpr_art20_data_portability: true"));
        let bad = verify_logical(&candidate(ART20, &facts, Some(false)), LOGICAL_BUDGET);
        assert_eq!(bad.score, 0);
        assert!(!bad.degraded);
    }

    #[test]
    fn logical_budget_exhaustion_is_degraded() {
        let rules: Vec<String> =
            (0..20).map(|i| format!(r#"{{"p":"p{i}","op":"ALL","conditions":["p{}"]}}"#, i + 1)).collect();
        let tree = format!("[{}]", rules.join(","));
        let facts = FactSet::new();
        let r = verify_logical(&candidate(&tree, &facts, Some(false)), 10);
        assert_eq!(r.score, 0);
        assert!(r.degraded);
    }

    #[test]
    fn agent_score_passes_through() {
        let facts = full_facts();
        let agent = ScriptedAgent::new([r#"{"score": 85, "feedback": "realistic"}"#]);
        let r = verify_with_agent(VerifierKind::Scenario, &candidate(ART20, &facts, Some(true)), &agent, &Templates::default())
            .unwrap();
        assert_eq!((r.score, r.degraded), (85, false));
        assert_eq!(r.feedback, "realistic");
        let sent = &agent.exchanges()[0];
        assert_eq!(sent.instruction, Templates::default().scenario);
        assert!(sent.context.contains("GDPR Art. 20"));
        assert!(sent.context.contains("processing_is_automated"));
    }

    #[test]
    fn agent_score_is_clamped() {
        let facts = full_facts();
        let agent = ScriptedAgent::new(["```json\n{\"score\": 250, \"feedback\": \"great\"}\n```"]);
        let r = verify_with_agent(VerifierKind::Legal, &candidate(ART20, &facts, None), &agent, &Templates::default())
            .unwrap();
        assert_eq!((r.score, r.degraded), (100, false));
        assert!(r.feedback.contains("clamped"));
    }

    #[test]
    fn agent_malformed_then_good_is_retried() {
        let facts = full_facts();
        let agent = ScriptedAgent::new(["no json here", r#"{"score": 60, "feedback": "fine"}"#]);
        let r = verify_with_agent(VerifierKind::Legal, &candidate(ART20, &facts, None), &agent, &Templates::default())
            .unwrap();
        assert_eq!(r.score, 60);
        assert_eq!(agent.calls(), 2);
    }

    #[test]
    fn agent_malformed_twice_degrades() {
        let facts = full_facts();
        let agent = ScriptedAgent::new([r#"{"score": "high"}"#, r#"{"feedback": "x"}"#]);
        let r = verify_with_agent(VerifierKind::Legal, &candidate(ART20, &facts, None), &agent, &Templates::default())
            .unwrap();
        assert_eq!((r.score, r.degraded), (0, true));
    }

    #[test]
    fn agent_transport_failure_twice_is_unavailable() {
        let facts = full_facts();
        let down = || ScriptedReply::Fail(AgentError::Transport("connection refused".into()));
        let agent = ScriptedAgent::new([down(), down()]);
        let err = verify_with_agent(VerifierKind::Scenario, &candidate(ART20, &facts, None), &agent, &Templates::default())
            .unwrap_err();
        assert_eq!((err.fallback.score, err.fallback.degraded), (0, true));
        assert_eq!(agent.calls(), 2);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_agent_verdict(r#"pre {"score": -3, "feedback": " f "} post"#).unwrap().score, 0);
        assert!(parse_agent_verdict(r#"{"score": 7.5, "feedback": "f"}"#).is_err());
        assert!(parse_agent_verdict(r#"{"score": 7, "feedback": ""}"#).is_err());
        assert_eq!(parse_agent_verdict(r#"{"score": 70.0, "feedback": "f"}"#).unwrap().score, 70);
    }

    #[test]
    fn gate_arithmetic() {
        let a = aggregate(&reports([72, 68, 75, 70]), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(a.average, Ratio::new(285, 4));
        assert_eq!(a.average_f64(), 71.25);
        assert!(a.passed);
        let b = aggregate(&reports([70, 70, 70, 69]), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(b.average_f64(), 69.75);
        assert!(!b.passed);
        let c = aggregate(&reports([70, 70, 70, 70]), DEFAULT_THRESHOLD).unwrap();
        assert!(c.passed);
        assert_eq!(DEFAULT_THRESHOLD, 70);
    }

    #[test]
    fn aggregate_requires_one_report_per_kind() {
        let mut three = reports([1, 2, 3, 4]);
        three.pop();
        assert_eq!(
            aggregate(&three, 70),
            Err(AggregateError::MissingVerifier(vec![VerifierKind::Legal]))
        );
        let mut dup = reports([1, 2, 3, 4]);
        dup[3].kind = VerifierKind::Scenario;
        assert_eq!(aggregate(&dup, 70), Err(AggregateError::DuplicateVerifier(VerifierKind::Scenario)));
    }

    #[test]
    fn aggregate_is_order_independent() {
        let forward = reports([10, 90, 55, 31]);
        let mut backward = forward.clone();
        backward.reverse();
        assert_eq!(aggregate(&forward, 70).unwrap(), aggregate(&backward, 70).unwrap());
    }

    #[test]
    fn assessment_serde_round_trip() {
        let a = aggregate(&reports([72, 68, 75, 70]), 70).unwrap();
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json["average"], 71.25);
        assert_eq!(json["passed"], true);
        let back: QualityAssessment = serde_json::from_value(json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn round_runs_all_four() {
        let facts = full_facts();
        let scenario = ScriptedAgent::new([r#"{"score": 90, "feedback": "s"}"#]);
        let legal = ScriptedAgent::new([
            ScriptedReply::Fail(AgentError::Transport("x".into())),
            ScriptedReply::Fail(AgentError::Transport("x".into())),
        ]);
        let templates = Templates::default();
        let lint = LintConfig::default();
        let set = VerifierSet {
            scenario_agent: &scenario,
            legal_agent: &legal,
            templates: &templates,
            lint: &lint,
            budget: LOGICAL_BUDGET,
        };
        let round = set.run(&candidate(ART20, &facts, Some(true)));
        let scores: Vec<u8> = round.reports.iter().map(|r| r.score).collect();
        assert_eq!(scores, [90, 100, 100, 0]);
        assert_eq!(round.unavailable.len(), 1);
        assert_eq!(round.unavailable[0].kind, VerifierKind::Legal);
    }
}

//! Lint catalog for machine-drafted samples.
//!
//! | code | name                  | severity |
//! |------|-----------------------|----------|
//! | L1   | RedundantChain        | Warning  |
//! | L2   | NegationAsCondition   | Warning  |
//! | L3   | UnreferencedFact      | Info     |
//! | L4   | UnsatisfiablePredicate| Info     |
//! | L5   | EmptyFactHack         | Error    |
//! | L6   | UnreachableRule       | Warning  |
//! | L7   | MissingChangeFacts    | Info     |

mod simplify;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::predicate::{FactSet, Predicate};
use crate::tree::{Rule, RuleTree};
use crate::validate::reachable_heads;

pub use simplify::{check_equivalence, simplify, Counterexample, EquivalenceMode, SimplifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum LintCode {
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
    L7,
}

impl LintCode {
    pub const ALL: [LintCode; 7] = [
        LintCode::L1,
        LintCode::L2,
        LintCode::L3,
        LintCode::L4,
        LintCode::L5,
        LintCode::L6,
        LintCode::L7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LintCode::L1 => "RedundantChain",
            LintCode::L2 => "NegationAsCondition",
            LintCode::L3 => "UnreferencedFact",
            LintCode::L4 => "UnsatisfiablePredicate",
            LintCode::L5 => "EmptyFactHack",
            LintCode::L6 => "UnreachableRule",
            LintCode::L7 => "MissingChangeFacts",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            LintCode::L1 | LintCode::L2 | LintCode::L6 => Severity::Warning,
            LintCode::L3 | LintCode::L4 | LintCode::L7 => Severity::Info,
            LintCode::L5 => Severity::Error,
        }
    }
}

impl fmt::Display for LintCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingLocation {
    Rule { index: usize },
    Predicate { name: Predicate },
    Field { name: String },
}

impl fmt::Display for FindingLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingLocation::Rule { index } => write!(f, "rules[{index}]"),
            FindingLocation::Predicate { name } => write!(f, "predicate:{name}"),
            FindingLocation::Field { name } => write!(f, "field:{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub rule_id: LintCode,
    pub severity: Severity,
    pub location: FindingLocation,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

impl Finding {
    fn new(code: LintCode, location: FindingLocation, message: String) -> Self {
        Self { rule_id: code, severity: code.severity(), location, message, suggestion: None }
    }

    fn with_suggestion(mut self, suggestion: String) -> Self {
        self.suggestion = Some(suggestion);
        self
    }

    /// `code<TAB>severity<TAB>location<TAB>message`
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.rule_id, self.severity, self.location, self.message)
    }
}

/// Renders findings as the line-oriented report, one finding per line.
pub fn report_lines(findings: &[Finding]) -> String {
    let mut out = String::new();
    for f in findings {
        out.push_str(&f.to_line());
        out.push('\n');
    }
    out
}

pub const DEFAULT_CHANGE_MARKERS: [&str; 5] = ["proposed", "change", "changes", "instead", "now plans"];

#[derive(Debug, Clone)]
pub struct LintConfig {
    /// Phrases in the question that indicate it is about a modification of
    /// the described situation (L7).
    pub change_markers: Vec<String>,
}

impl Default for LintConfig {
    fn default() -> Self {
        Self { change_markers: DEFAULT_CHANGE_MARKERS.iter().map(|s| s.to_string()).collect() }
    }
}

/// The parts of a sample the linter looks at.
#[derive(Debug, Clone, Copy)]
pub struct LintSubject<'a> {
    pub tree: &'a RuleTree,
    pub facts: &'a FactSet,
    pub label: Option<bool>,
    pub question: &'a str,
}

/// A pass-through link: rule `outer` has the single condition `via` and no
/// exceptions; `via` is concluded only by rule `inner` and referenced nowhere
/// else, so `inner`'s body can be moved into `outer`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassThrough {
    pub outer: usize,
    pub inner: usize,
    pub via: Predicate,
}

pub fn pass_through_links(tree: &RuleTree) -> Vec<PassThrough> {
    let rules = tree.rules();
    let target = tree.default_target();
    let mut links = Vec::new();
    for (outer, rule) in rules.iter().enumerate() {
        if rule.conditions.len() != 1 || !rule.exceptions.is_empty() {
            continue;
        }
        let via = &rule.conditions[0];
        if via == target || via == &rule.head || tree.reference_count(via) != 1 {
            continue;
        }
        let mut producers = tree.rules_for(via);
        let (Some(inner), None) = (producers.next(), producers.next()) else {
            continue;
        };
        let inner_rule = &rules[inner];
        if inner_rule.body().any(|q| q == &rule.head || q == via) {
            continue;
        }
        links.push(PassThrough { outer, inner, via: via.clone() });
    }
    links
}

fn rule_fragment(rule: &Rule) -> String {
    serde_json::to_string(rule).expect("rules always serialize")
}

fn contains_marker(question: &str, marker: &str) -> bool {
    let haystack: Vec<String> = question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect();
    let needle: Vec<String> = marker.split_whitespace().map(|w| w.to_lowercase()).collect();
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle.as_slice())
}

pub fn lint(subject: LintSubject<'_>, config: &LintConfig) -> Vec<Finding> {
    let LintSubject { tree, facts, label, question } = subject;
    let rules = tree.rules();
    let mut findings = Vec::new();

    for link in pass_through_links(tree) {
        let outer = &rules[link.outer];
        let inner = &rules[link.inner];
        let merged = Rule::new(
            outer.head.clone(),
            inner.op,
            inner.conditions.clone(),
            inner.exceptions.clone(),
        );
        findings.push(
            Finding::new(
                LintCode::L1,
                FindingLocation::Rule { index: link.outer },
                format!(
                    "`{}` only forwards `{}`, which nothing else uses; rule {} can be inlined",
                    outer.head, link.via, link.inner
                ),
            )
            .with_suggestion(rule_fragment(&merged)),
        );
    }

    for (index, rule) in rules.iter().enumerate() {
        if !rule.exceptions.is_empty() {
            continue;
        }
        let negated: Vec<&Predicate> =
            rule.conditions.iter().filter(|c| c.has_negation_prefix()).collect();
        if negated.len() >= 2 && negated.len() * 2 >= rule.conditions.len() {
            let positive: Vec<String> = negated
                .iter()
                .map(|c| {
                    let s = c.as_str();
                    s.strip_prefix("not_").or_else(|| s.strip_prefix("no_")).unwrap_or(s).to_string()
                })
                .collect();
            findings.push(
                Finding::new(
                    LintCode::L2,
                    FindingLocation::Rule { index },
                    format!(
                        "{} of {} conditions of `{}` are negations that must be proven as facts; \
                         absence is already the default, so the positive predicates belong in exceptions",
                        negated.len(),
                        rule.conditions.len(),
                        rule.head
                    ),
                )
                .with_suggestion(serde_json::to_string(&positive).expect("strings serialize")),
            );
        }
    }

    let mut referenced = BTreeSet::new();
    let mut conditions = BTreeSet::new();
    let mut exceptions = BTreeSet::new();
    for rule in rules {
        referenced.extend(rule.body());
        conditions.extend(rule.conditions.iter());
        exceptions.extend(rule.exceptions.iter());
    }

    for fact in facts.iter() {
        if !referenced.contains(fact) {
            findings.push(Finding::new(
                LintCode::L3,
                FindingLocation::Predicate { name: fact.clone() },
                format!("fact `{fact}` is not used by any condition or exception"),
            ));
        }
    }

    for c in &conditions {
        if !tree.is_head(c) && !facts.contains(c) {
            findings.push(Finding::new(
                LintCode::L4,
                FindingLocation::Predicate { name: (*c).clone() },
                format!("condition `{c}` has no rule and is not among the facts, so it is always false here"),
            ));
        }
    }

    if facts.is_empty() && label.is_some() {
        findings.push(Finding::new(
            LintCode::L5,
            FindingLocation::Field { name: "facts".into() },
            "labeled sample has no facts; its label rests entirely on negation as failure".into(),
        ));
    }

    let reachable = reachable_heads(tree, tree.default_target());
    for (index, rule) in rules.iter().enumerate() {
        if !reachable.contains(&rule.head) {
            findings.push(Finding::new(
                LintCode::L6,
                FindingLocation::Rule { index },
                format!(
                    "rule for `{}` cannot influence target `{}`",
                    rule.head,
                    tree.default_target()
                ),
            ));
        }
    }

    if let Some(marker) = config.change_markers.iter().find(|m| contains_marker(question, m)) {
        let baseline_only = !facts.is_empty()
            && facts.iter().all(|f| conditions.contains(f))
            && !facts.iter().any(|f| exceptions.contains(f));
        if baseline_only {
            findings.push(Finding::new(
                LintCode::L7,
                FindingLocation::Field { name: "facts".into() },
                format!(
                    "question mentions \"{marker}\" but every fact is a positive condition; \
                     the facts may describe the original situation rather than the change"
                ),
            ));
        }
    }

    findings
}

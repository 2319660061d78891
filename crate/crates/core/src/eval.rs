//! Deterministic evaluation of rule trees against closed fact sets.
//!
//! A predicate holds iff it is a fact, or some rule concluding it has its
//! operator satisfied over the conditions while none of its exceptions
//! holds. Anything else is false (negation as failure). Rules sharing a head
//! are alternatives. Re-entering a predicate that is already being evaluated
//! yields false for the inner occurrence and raises a `CYCLE_CUT` warning.
//!
//! Every rule body is evaluated in full (no short-circuiting) so the trace
//! records the status of every condition and exception that was consulted.
//! Results are memoized per predicate within one evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predicate::{FactSet, Predicate};
use crate::tree::RuleTree;
use crate::validate::{validate, ValidationReport};

pub const DEFAULT_STEP_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Error)]
pub enum EvalError {
    #[error("rule tree has {} validation error(s)", .0.errors.len())]
    InvalidTree(ValidationReport),
    #[error("unknown target `{0}`: not a head, not a fact and not referenced by any rule")]
    UnknownTarget(Predicate),
    #[error("step budget of {budget} predicate evaluations exhausted")]
    BudgetExceeded { budget: usize },
}

/// How a predicate's value was decided.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TraceEntry {
    EstablishedByFact,
    DerivedByRule { rule: usize, satisfied: Vec<Predicate> },
    DefeatedByException { rule: usize, exception: Predicate },
    FailedConditions { rules: Vec<usize> },
    NotEstablished,
    CutOnCycle { rules: Vec<usize> },
}

impl TraceEntry {
    pub fn value(&self) -> bool {
        matches!(self, TraceEntry::EstablishedByFact | TraceEntry::DerivedByRule { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            TraceEntry::EstablishedByFact => "fact",
            TraceEntry::DerivedByRule { .. } => "derived",
            TraceEntry::DefeatedByException { .. } => "defeated",
            TraceEntry::FailedConditions { .. } => "failed",
            TraceEntry::NotEstablished => "not established",
            TraceEntry::CutOnCycle { .. } => "cut on cycle",
        }
    }
}

/// One entry per predicate consulted during an evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DerivationTrace {
    entries: BTreeMap<Predicate, TraceEntry>,
}

impl DerivationTrace {
    pub fn get(&self, p: &Predicate) -> Option<&TraceEntry> {
        self.entries.get(p)
    }

    pub fn get_name(&self, name: &str) -> Option<&TraceEntry> {
        self.entries.iter().find(|(p, _)| p.as_str() == name).map(|(_, e)| e)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Predicate, &TraceEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders the trace as an indented derivation rooted at `target`.
    pub fn render(&self, tree: &RuleTree, target: &Predicate) -> String {
        let mut out = String::new();
        let mut path = Vec::new();
        self.render_node(tree, target, 0, &mut path, &mut out);
        out
    }

    fn render_node(
        &self,
        tree: &RuleTree,
        p: &Predicate,
        depth: usize,
        path: &mut Vec<Predicate>,
        out: &mut String,
    ) {
        use std::fmt::Write;
        let indent = "  ".repeat(depth);
        let Some(entry) = self.entries.get(p) else {
            let _ = writeln!(out, "{indent}{p}: not consulted");
            return;
        };
        let verdict = if entry.value() { "true" } else { "false" };
        let detail = match entry {
            TraceEntry::DerivedByRule { rule, .. } => format!(" (rule {rule})"),
            TraceEntry::DefeatedByException { rule, exception } => {
                format!(" (rule {rule} defeated by {exception})")
            }
            TraceEntry::FailedConditions { rules } | TraceEntry::CutOnCycle { rules } => {
                format!(" (rules {rules:?})")
            }
            _ => String::new(),
        };
        let _ = writeln!(out, "{indent}{p}: {verdict} [{}]{detail}", entry.label());
        if path.contains(p) {
            return;
        }
        path.push(p.clone());
        for i in tree.rules_for(p) {
            let rule = &tree.rules()[i];
            let _ = writeln!(out, "{indent}  rule {i} {}:", rule.op);
            for c in &rule.conditions {
                self.render_node(tree, c, depth + 2, path, out);
            }
            if !rule.exceptions.is_empty() {
                let _ = writeln!(out, "{indent}  unless:");
                for e in &rule.exceptions {
                    self.render_node(tree, e, depth + 2, path, out);
                }
            }
        }
        path.pop();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarningCode {
    CycleCut,
    DuplicateFact,
}

impl fmt::Display for WarningCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarningCode::CycleCut => "CYCLE_CUT",
            WarningCode::DuplicateFact => "DUPLICATE_FACT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvalWarning {
    pub code: WarningCode,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub value: bool,
    pub target: Predicate,
    pub trace: DerivationTrace,
    pub warnings: Vec<EvalWarning>,
    pub steps_used: usize,
}

impl EvalResult {
    pub fn has_warning(&self, code: WarningCode) -> bool {
        self.warnings.iter().any(|w| w.code == code)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub target: Option<Predicate>,
    pub budget: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { target: None, budget: DEFAULT_STEP_BUDGET }
    }
}

impl EvalOptions {
    pub fn with_target(mut self, target: Predicate) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

/// A validated tree ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Evaluator<'t> {
    tree: &'t RuleTree,
    rules_by_head: HashMap<&'t Predicate, Vec<usize>>,
    mentioned: HashSet<&'t Predicate>,
}

impl<'t> Evaluator<'t> {
    /// Rejects trees with validation errors.
    pub fn new(tree: &'t RuleTree) -> Result<Self, EvalError> {
        let report = validate(tree);
        if !report.is_ok() {
            return Err(EvalError::InvalidTree(report));
        }
        Ok(Self::new_unchecked(tree))
    }

    fn new_unchecked(tree: &'t RuleTree) -> Self {
        let mut rules_by_head: HashMap<&Predicate, Vec<usize>> = HashMap::new();
        let mut mentioned = HashSet::new();
        for (i, rule) in tree.rules().iter().enumerate() {
            rules_by_head.entry(&rule.head).or_default().push(i);
            mentioned.insert(&rule.head);
            mentioned.extend(rule.body());
        }
        Self { tree, rules_by_head, mentioned }
    }

    pub fn tree(&self) -> &'t RuleTree {
        self.tree
    }

    pub fn evaluate(&self, facts: &FactSet, options: &EvalOptions) -> Result<EvalResult, EvalError> {
        let target = options
            .target
            .clone()
            .unwrap_or_else(|| self.tree.default_target().clone());
        if !facts.contains(&target) && !self.mentioned.contains(&target) {
            return Err(EvalError::UnknownTarget(target));
        }

        let mut run = Run {
            eval: self,
            facts,
            budget: options.budget,
            steps: 0,
            memo: HashMap::new(),
            entries: BTreeMap::new(),
            on_path: HashSet::new(),
            cut: BTreeSet::new(),
        };
        let value = run.solve(&target)?;

        let mut warnings: Vec<EvalWarning> = run
            .cut
            .iter()
            .map(|p| EvalWarning { code: WarningCode::CycleCut, predicate: (*p).clone() })
            .collect();
        let duplicates: BTreeSet<&Predicate> = facts.duplicates().iter().collect();
        warnings.extend(
            duplicates
                .into_iter()
                .map(|p| EvalWarning { code: WarningCode::DuplicateFact, predicate: p.clone() }),
        );

        Ok(EvalResult {
            value,
            target,
            trace: DerivationTrace {
                entries: run.entries.into_iter().map(|(p, e)| (p.clone(), e)).collect(),
            },
            warnings,
            steps_used: run.steps,
        })
    }

    pub fn explain(&self, facts: &FactSet, options: &EvalOptions) -> Result<DerivationTrace, EvalError> {
        self.evaluate(facts, options).map(|r| r.trace)
    }
}

/// Mutable state of a single evaluation.
struct Run<'e, 't> {
    eval: &'e Evaluator<'t>,
    facts: &'e FactSet,
    budget: usize,
    steps: usize,
    memo: HashMap<&'t Predicate, bool>,
    entries: BTreeMap<&'t Predicate, TraceEntry>,
    on_path: HashSet<&'t Predicate>,
    cut: BTreeSet<&'t Predicate>,
}

/// A predicate whose rule bodies are being evaluated. `needed` flattens the
/// bodies of all its rules in order; `values` holds the value each occurrence
/// produced.
struct Frame<'t> {
    predicate: &'t Predicate,
    rules: Vec<usize>,
    needed: Vec<&'t Predicate>,
    values: Vec<bool>,
}

enum Visit<'t> {
    Resolved(bool),
    Expand(Frame<'t>),
}

impl<'e, 't> Run<'e, 't> {
    fn solve(&mut self, target: &Predicate) -> Result<bool, EvalError> {
        // The target may be a fact that the tree never mentions.
        let target: &'t Predicate = match self.eval.mentioned.get(target) {
            Some(p) => p,
            None => {
                self.step()?;
                return Ok(true);
            }
        };

        let mut stack = match self.visit(target)? {
            Visit::Resolved(v) => return Ok(v),
            Visit::Expand(frame) => vec![frame],
        };

        loop {
            let top = stack.last_mut().expect("stack is non-empty inside the loop");
            if top.values.len() < top.needed.len() {
                let next = top.needed[top.values.len()];
                match self.visit(next)? {
                    Visit::Resolved(v) => top.values.push(v),
                    Visit::Expand(frame) => stack.push(frame),
                }
                continue;
            }

            let frame = stack.pop().expect("checked above");
            let value = self.finish(&frame);
            match stack.last_mut() {
                Some(parent) => parent.values.push(value),
                None => return Ok(value),
            }
        }
    }

    fn step(&mut self) -> Result<(), EvalError> {
        if self.steps >= self.budget {
            return Err(EvalError::BudgetExceeded { budget: self.budget });
        }
        self.steps += 1;
        Ok(())
    }

    fn visit(&mut self, p: &'t Predicate) -> Result<Visit<'t>, EvalError> {
        self.step()?;
        if let Some(&v) = self.memo.get(p) {
            return Ok(Visit::Resolved(v));
        }
        if self.on_path.contains(p) {
            self.cut.insert(p);
            return Ok(Visit::Resolved(false));
        }
        if self.facts.contains(p) {
            self.memo.insert(p, true);
            self.entries.insert(p, TraceEntry::EstablishedByFact);
            return Ok(Visit::Resolved(true));
        }
        let Some(rules) = self.eval.rules_by_head.get(p) else {
            self.memo.insert(p, false);
            self.entries.insert(p, TraceEntry::NotEstablished);
            return Ok(Visit::Resolved(false));
        };
        let tree_rules: &'t [crate::tree::Rule] = self.eval.tree.rules();
        let needed: Vec<&'t Predicate> = rules.iter().flat_map(|&i| tree_rules[i].body()).collect();
        self.on_path.insert(p);
        Ok(Visit::Expand(Frame {
            predicate: p,
            rules: rules.clone(),
            values: Vec::with_capacity(needed.len()),
            needed,
        }))
    }

    fn finish(&mut self, frame: &Frame<'t>) -> bool {
        let tree_rules = self.eval.tree.rules();
        let mut offset = 0;
        let mut fired = None;
        let mut defeated = None;
        for &i in &frame.rules {
            let rule = &tree_rules[i];
            let nc = rule.conditions.len();
            let ne = rule.exceptions.len();
            let cond_values = &frame.values[offset..offset + nc];
            let exc_values = &frame.values[offset + nc..offset + nc + ne];
            offset += nc + ne;

            let satisfied = rule.op.combine(cond_values.iter().copied());
            let firing_exception = exc_values.iter().position(|&v| v);
            match firing_exception {
                Some(j) if defeated.is_none() => defeated = Some((i, rule.exceptions[j].clone())),
                None if satisfied && fired.is_none() => {
                    let held = rule
                        .conditions
                        .iter()
                        .zip(cond_values)
                        .filter(|(_, &v)| v)
                        .map(|(c, _)| c.clone())
                        .collect();
                    fired = Some((i, held));
                }
                _ => {}
            }
        }

        let p = frame.predicate;
        let entry = match (fired, defeated) {
            (Some((rule, satisfied)), _) => TraceEntry::DerivedByRule { rule, satisfied },
            (None, Some((rule, exception))) => TraceEntry::DefeatedByException { rule, exception },
            (None, None) if self.cut.contains(p) => TraceEntry::CutOnCycle { rules: frame.rules.to_vec() },
            (None, None) => TraceEntry::FailedConditions { rules: frame.rules.to_vec() },
        };
        let value = entry.value();
        self.on_path.remove(p);
        self.memo.insert(p, value);
        self.entries.insert(p, entry);
        value
    }
}

/// Validates `tree` and evaluates it once.
pub fn evaluate(
    tree: &RuleTree,
    facts: &FactSet,
    target: Option<&Predicate>,
    budget: Option<usize>,
) -> Result<EvalResult, EvalError> {
    let options = EvalOptions {
        target: target.cloned(),
        budget: budget.unwrap_or(DEFAULT_STEP_BUDGET),
    };
    Evaluator::new(tree)?.evaluate(facts, &options)
}

/// The trace component of [`evaluate`].
pub fn explain(
    tree: &RuleTree,
    facts: &FactSet,
    target: Option<&Predicate>,
) -> Result<DerivationTrace, EvalError> {
    evaluate(tree, facts, target, None).map(|r| r.trace)
}

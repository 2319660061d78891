//! Structural checks on rule trees.
//!
//! Errors make a tree unusable for evaluation. Warnings flag shapes that
//! evaluate fine but usually indicate a drafting mistake. Notes are purely
//! informational (leaf predicates that can only come from facts).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::predicate::Predicate;
use crate::tree::{Rule, RuleTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    EmptyConditions,
    Overlap,
    DuplicateRule,
    Cycle,
    Unreachable,
    SharedHead,
    Underivable,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::EmptyConditions => "EMPTY_CONDITIONS",
            IssueCode::Overlap => "OVERLAP",
            IssueCode::DuplicateRule => "DUPLICATE_RULE",
            IssueCode::Cycle => "CYCLE",
            IssueCode::Unreachable => "UNREACHABLE",
            IssueCode::SharedHead => "SHARED_HEAD",
            IssueCode::Underivable => "UNDERIVABLE",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where in a tree an issue was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Rule { index: usize },
    Rules { indices: Vec<usize> },
    Predicate { name: Predicate },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Rule { index } => write!(f, "rules[{index}]"),
            Location::Rules { indices } => {
                let parts: Vec<String> = indices.iter().map(|i| format!("rules[{i}]")).collect();
                f.write_str(&parts.join(","))
            }
            Location::Predicate { name } => write!(f, "{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub code: IssueCode,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
    pub notes: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_warning(&self, code: IssueCode) -> bool {
        self.warnings.iter().any(|i| i.code == code)
    }

    pub fn has_error(&self, code: IssueCode) -> bool {
        self.errors.iter().any(|i| i.code == code)
    }
}

pub fn validate(tree: &RuleTree) -> ValidationReport {
    let mut report = ValidationReport::default();
    let rules = tree.rules();

    for (index, rule) in rules.iter().enumerate() {
        if rule.conditions.is_empty() {
            report.errors.push(Issue {
                code: IssueCode::EmptyConditions,
                location: Location::Rule { index },
                message: format!("rule for `{}` has no conditions", rule.head),
            });
        }
        let conditions: BTreeSet<&Predicate> = rule.conditions.iter().collect();
        let overlap: BTreeSet<&Predicate> =
            rule.exceptions.iter().filter(|e| conditions.contains(e)).collect();
        for p in overlap {
            report.errors.push(Issue {
                code: IssueCode::Overlap,
                location: Location::Rule { index },
                message: format!("`{p}` is both a condition and an exception of `{}`", rule.head),
            });
        }
    }

    let mut first_seen: HashMap<&Rule, usize> = HashMap::new();
    for (index, rule) in rules.iter().enumerate() {
        if let Some(&first) = first_seen.get(rule) {
            report.errors.push(Issue {
                code: IssueCode::DuplicateRule,
                location: Location::Rules { indices: vec![first, index] },
                message: format!("rule for `{}` is repeated verbatim", rule.head),
            });
        } else {
            first_seen.insert(rule, index);
        }
    }

    let mut by_head: BTreeMap<&Predicate, Vec<usize>> = BTreeMap::new();
    for (index, rule) in rules.iter().enumerate() {
        by_head.entry(&rule.head).or_default().push(index);
    }
    for (head, indices) in &by_head {
        if indices.len() > 1 {
            report.warnings.push(Issue {
                code: IssueCode::SharedHead,
                location: Location::Rules { indices: indices.clone() },
                message: format!("{} rules conclude `{head}`; any one of them suffices", indices.len()),
            });
        }
    }

    for cycle in find_cycles(tree) {
        let names: Vec<&str> = cycle.iter().map(|p| p.as_str()).collect();
        report.warnings.push(Issue {
            code: IssueCode::Cycle,
            location: Location::Predicate { name: cycle[0].clone() },
            message: format!("cyclic dependency: {}", names.join(" -> ")),
        });
    }

    let reachable = reachable_heads(tree, tree.default_target());
    for (index, rule) in rules.iter().enumerate() {
        if !reachable.contains(&rule.head) {
            report.warnings.push(Issue {
                code: IssueCode::Unreachable,
                location: Location::Rule { index },
                message: format!(
                    "`{}` is not reachable from target `{}`",
                    rule.head,
                    tree.default_target()
                ),
            });
        }
    }

    let heads: HashSet<&Predicate> = rules.iter().map(|r| &r.head).collect();
    let mut seen = HashSet::new();
    for rule in rules {
        for p in &rule.conditions {
            if !heads.contains(p) && seen.insert(p) {
                report.notes.push(Issue {
                    code: IssueCode::Underivable,
                    location: Location::Predicate { name: p.clone() },
                    message: format!("`{p}` has no rule and can only be established as a fact"),
                });
            }
        }
    }

    report
}

/// Heads reachable from `target` through condition and exception references.
pub fn reachable_heads(tree: &RuleTree, target: &Predicate) -> BTreeSet<Predicate> {
    let mut by_head: HashMap<&Predicate, Vec<&Rule>> = HashMap::new();
    for rule in tree.rules() {
        by_head.entry(&rule.head).or_default().push(rule);
    }
    let mut reached: HashSet<&Predicate> = HashSet::new();
    let mut queue: VecDeque<&Predicate> = VecDeque::from([target]);
    while let Some(p) = queue.pop_front() {
        let Some(rules) = by_head.get(p) else { continue };
        if !reached.insert(p) {
            continue;
        }
        for rule in rules {
            queue.extend(rule.body().filter(|q| by_head.contains_key(q) && !reached.contains(q)));
        }
    }
    reached.into_iter().cloned().collect()
}

/// Strongly connected components of the head dependency graph that contain
/// a cycle, each listed from its smallest member and closed back to it.
pub fn find_cycles(tree: &RuleTree) -> Vec<Vec<Predicate>> {
    let heads: Vec<Predicate> = tree
        .rules()
        .iter()
        .map(|r| r.head.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index_of: BTreeMap<&Predicate, usize> = heads.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); heads.len()];
    for rule in tree.rules() {
        let from = index_of[&rule.head];
        for q in rule.body() {
            if let Some(&to) = index_of.get(q) {
                edges[from].insert(to);
            }
        }
    }

    let components = tarjan(&edges);
    let mut cycles = Vec::new();
    for mut comp in components {
        let cyclic = comp.len() > 1 || edges[comp[0]].contains(&comp[0]);
        if !cyclic {
            continue;
        }
        comp.sort_unstable();
        let mut path: Vec<Predicate> = comp.iter().map(|&i| heads[i].clone()).collect();
        path.push(heads[comp[0]].clone());
        cycles.push(path);
    }
    cycles.sort();
    cycles
}

fn tarjan(edges: &[BTreeSet<usize>]) -> Vec<Vec<usize>> {
    let n = edges.len();
    let mut index: Vec<Option<usize>> = vec![None; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut out = Vec::new();

    for root in 0..n {
        if index[root].is_some() {
            continue;
        }
        // (vertex, successors still to visit)
        let mut work: Vec<(usize, Vec<usize>)> = Vec::new();
        index[root] = Some(next);
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        work.push((root, edges[root].iter().rev().copied().collect()));

        while let Some((v, pending)) = work.last_mut() {
            let v = *v;
            if let Some(w) = pending.pop() {
                match index[w] {
                    None => {
                        index[w] = Some(next);
                        low[w] = next;
                        next += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        work.push((w, edges[w].iter().rev().copied().collect()));
                    }
                    Some(iw) if on_stack[w] => low[v] = low[v].min(iw),
                    Some(_) => {}
                }
                continue;
            }
            work.pop();
            if let Some((parent, _)) = work.last() {
                low[*parent] = low[*parent].min(low[v]);
            }
            if Some(low[v]) == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                out.push(comp);
            }
        }
    }
    out
}

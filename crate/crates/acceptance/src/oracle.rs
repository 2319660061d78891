//! Brute-force reference semantics for acyclic rule trees.
//!
//! Shares no code with the engine. Rules are plain strings, compiled to bit
//! masks, and truth is computed by iterating "P holds if P is a fact or some
//! rule for P fires" over every predicate at once until nothing changes.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OracleRule {
    pub head: String,
    pub all: bool,
    pub conditions: Vec<String>,
    pub exceptions: Vec<String>,
}

impl OracleRule {
    pub fn new(head: &str, all: bool, conditions: &[&str], exceptions: &[&str]) -> Self {
        Self {
            head: head.to_string(),
            all,
            conditions: conditions.iter().map(|s| s.to_string()).collect(),
            exceptions: exceptions.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The wire form understood by the engine's parser.
    pub fn to_json(&self) -> String {
        let list = |xs: &[String]| {
            xs.iter().map(|x| format!("\"{x}\"")).collect::<Vec<_>>().join(",")
        };
        format!(
            r#"{{"p":"{}","op":"{}","conditions":[{}],"exceptions":[{}]}}"#,
            self.head,
            if self.all { "ALL" } else { "ANY" },
            list(&self.conditions),
            list(&self.exceptions)
        )
    }
}

pub fn tree_json(rules: &[OracleRule]) -> String {
    let parts: Vec<String> = rules.iter().map(OracleRule::to_json).collect();
    format!("[{}]", parts.join(","))
}

/// Every predicate mentioned by the rules.
pub fn universe(rules: &[OracleRule]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for r in rules {
        out.insert(r.head.clone());
        out.extend(r.conditions.iter().cloned());
        out.extend(r.exceptions.iter().cloned());
    }
    out
}

/// A tree compiled to predicate indices so many fact sets can be checked
/// cheaply. Predicates are numbered in [`universe`] order, and facts outside
/// the universe are irrelevant to the rules.
pub struct Compiled {
    names: Vec<String>,
    rules: Vec<(usize, bool, u64, u64)>,
}

impl Compiled {
    pub fn new(rules: &[OracleRule]) -> Self {
        let names: Vec<String> = universe(rules).into_iter().collect();
        assert!(names.len() <= 64, "oracle universe limited to 64 predicates");
        let index = |n: &String| names.iter().position(|x| x == n).expect("name in universe");
        let mask = |xs: &[String]| xs.iter().fold(0u64, |m, x| m | 1 << index(x));
        let rules = rules
            .iter()
            .map(|r| (index(&r.head), r.all, mask(&r.conditions), mask(&r.exceptions)))
            .collect();
        Self { names, rules }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|x| x == name)
    }

    pub fn mask_of(&self, facts: &BTreeSet<String>) -> u64 {
        facts.iter().filter_map(|f| self.index_of(f)).fold(0, |m, i| m | 1 << i)
    }

    /// Bit set of the predicates that hold, or `None` when the iteration
    /// does not settle (which only happens for cyclic trees).
    pub fn fixpoint_mask(&self, facts: u64) -> Option<u64> {
        let mut current = 0u64;
        for _ in 0..=self.names.len() + 1 {
            let mut next = facts;
            for &(head, all, conds, excs) in &self.rules {
                let body = if all { current & conds == conds } else { current & conds != 0 };
                if body && current & excs == 0 {
                    next |= 1 << head;
                }
            }
            if next == current {
                return Some(current);
            }
            current = next;
        }
        None
    }
}

/// Truth value of every predicate in `rules` and `facts`, or `None` when the
/// iteration does not settle.
pub fn fixpoint(rules: &[OracleRule], facts: &BTreeSet<String>) -> Option<BTreeMap<String, bool>> {
    let compiled = Compiled::new(rules);
    let held = compiled.fixpoint_mask(compiled.mask_of(facts))?;
    let mut out: BTreeMap<String, bool> =
        compiled.names.iter().enumerate().map(|(i, n)| (n.clone(), held >> i & 1 == 1)).collect();
    for f in facts {
        out.insert(f.clone(), true);
    }
    Some(out)
}

/// The oracle's answer for the default target (the first rule's head).
pub fn oracle_value(rules: &[OracleRule], facts: &BTreeSet<String>) -> Option<bool> {
    let target = &rules.first()?.head;
    fixpoint(rules, facts).map(|m| m[target])
}

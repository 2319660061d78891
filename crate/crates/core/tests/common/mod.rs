#![allow(dead_code)]

#[path = "../../../acceptance/src/oracle.rs"]
pub mod oracle;

use std::collections::BTreeSet;

use formalex_core::{FactSet, Predicate, RuleTree};
use oracle::OracleRule;
use proptest::prelude::*;

/// Raw material for one rule: head seed, operator, and a role code per
/// later predicate (0 unused, 1 condition, 2 exception).
type RawRule = (usize, bool, Vec<u8>);

fn build(n: usize, raw: Vec<RawRule>) -> Vec<OracleRule> {
    let mut rules: Vec<OracleRule> = Vec::new();
    for (i, (seed, all, codes)) in raw.into_iter().enumerate() {
        let head = if i == 0 { 0 } else { seed % (n - 1) };
        let (mut conds, mut excs) = (Vec::new(), Vec::new());
        for (k, p) in (head + 1..n).enumerate() {
            match codes[k] {
                1 => conds.push(format!("p{p}")),
                2 => excs.push(format!("p{p}")),
                _ => {}
            }
        }
        if conds.is_empty() {
            // Promote the first exception, or the next predicate.
            conds.push(if excs.is_empty() { format!("p{}", head + 1) } else { excs.remove(0) });
        }
        let rule = OracleRule { head: format!("p{head}"), all, conditions: conds, exceptions: excs };
        if !rules.contains(&rule) {
            rules.push(rule);
        }
    }
    rules
}

/// Acyclic trees over `p0..p{n-1}`: rules for `p{i}` only mention larger
/// indices, and the first rule concludes `p0`.
pub fn arb_tree(max_preds: usize, max_rules: usize) -> impl Strategy<Value = Vec<OracleRule>> {
    (2..=max_preds).prop_flat_map(move |n| {
        let rule = (0..n, any::<bool>(), prop::collection::vec(0u8..3, n));
        prop::collection::vec(rule, 1..=max_rules).prop_map(move |raw| build(n, raw))
    })
}

pub fn arb_tree_with_facts(max_preds: usize, max_rules: usize) -> impl Strategy<Value = (Vec<OracleRule>, BTreeSet<String>)> {
    arb_tree(max_preds, max_rules).prop_flat_map(|rules| {
        let names: Vec<String> = oracle::universe(&rules).into_iter().collect();
        let n = names.len();
        (Just(rules), prop::collection::vec(any::<bool>(), n)).prop_map(move |(rules, picks)| {
            let facts = names.iter().zip(picks).filter(|(_, on)| *on).map(|(x, _)| x.clone()).collect();
            (rules, facts)
        })
    })
}

pub fn engine_tree(rules: &[OracleRule]) -> RuleTree {
    RuleTree::parse(&oracle::tree_json(rules)).expect("generated trees parse")
}

pub fn fact_set<'a>(names: impl IntoIterator<Item = &'a String>) -> FactSet {
    FactSet::from_predicates(names.into_iter().map(|n| Predicate::new(n.as_str()).unwrap()))
}

mod common;

use std::collections::BTreeSet;

use common::{arb_tree, arb_tree_with_facts, engine_tree, fact_set, oracle};
use formalex_core::lint::{self, check_equivalence, simplify, EquivalenceMode, LintConfig, LintSubject};
use formalex_core::verify::{aggregate, VerifierKind, VerifierReport};
use formalex_core::{evaluate, EvalError, Predicate, TraceEntry};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn evaluation_is_deterministic((rules, facts) in arb_tree_with_facts(7, 6)) {
        let tree = engine_tree(&rules);
        let facts = fact_set(&facts);
        let a = evaluate(&tree, &facts, None, None).unwrap();
        let b = evaluate(&tree, &facts, None, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn facts_are_always_true((rules, facts) in arb_tree_with_facts(7, 6)) {
        let tree = engine_tree(&rules);
        let set = fact_set(&facts);
        for f in &facts {
            let p = Predicate::new(f.as_str()).unwrap();
            let r = evaluate(&tree, &set, Some(&p), None).unwrap();
            prop_assert!(r.value);
            prop_assert_eq!(r.trace.get(&p), Some(&TraceEntry::EstablishedByFact));
        }
    }

    #[test]
    fn exception_free_trees_are_monotone((rules, facts) in arb_tree_with_facts(7, 6), extra in any::<prop::sample::Index>()) {
        let rules: Vec<_> = rules.into_iter().map(|mut r| { r.exceptions.clear(); r }).collect();
        let mut deduped = Vec::new();
        for r in rules {
            if !deduped.contains(&r) {
                deduped.push(r);
            }
        }
        let tree = engine_tree(&deduped);
        let names: Vec<String> = oracle::universe(&deduped).into_iter().collect();
        let mut more: BTreeSet<String> = facts.iter().filter(|f| names.contains(f)).cloned().collect();
        let before = evaluate(&tree, &fact_set(&more), None, None).unwrap().value;
        more.insert(names[extra.index(names.len())].clone());
        let after = evaluate(&tree, &fact_set(&more), None, None).unwrap().value;
        prop_assert!(!before || after);
    }

    #[test]
    fn derivable_exception_blocks_its_rule((rules, facts) in arb_tree_with_facts(7, 6)) {
        let tree = engine_tree(&rules);
        let set = fact_set(&facts);
        let r = evaluate(&tree, &set, None, None).unwrap();
        for (_, entry) in r.trace.iter() {
            if let TraceEntry::DerivedByRule { rule, .. } = entry {
                for e in &tree.rules()[*rule].exceptions {
                    let held = evaluate(&tree, &set, Some(e), None).unwrap().value;
                    prop_assert!(!held, "rule {} fired although exception {} holds", rule, e);
                }
            }
        }
    }

    #[test]
    fn budget_either_suffices_or_fails_cleanly((rules, facts) in arb_tree_with_facts(7, 6), budget in 0usize..12) {
        let tree = engine_tree(&rules);
        let set = fact_set(&facts);
        let full = evaluate(&tree, &set, None, None).unwrap();
        match evaluate(&tree, &set, None, Some(budget)) {
            Ok(r) => {
                prop_assert!(r.steps_used <= budget);
                prop_assert_eq!(r.value, full.value);
            }
            Err(EvalError::BudgetExceeded { budget: b }) => {
                prop_assert_eq!(b, budget);
                prop_assert!(full.steps_used > budget);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn simplify_preserves_meaning_and_is_idempotent(rules in arb_tree(7, 6)) {
        let tree = engine_tree(&rules);
        let once = simplify(&tree).unwrap();
        prop_assert!(once.len() <= tree.len());
        prop_assert!(check_equivalence(&tree, &once, EquivalenceMode::Exhaustive).is_ok());
        prop_assert!(lint::pass_through_links(&once).is_empty());
        let twice = simplify(&once).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn lint_is_pure((rules, facts) in arb_tree_with_facts(7, 6), label in any::<bool>()) {
        let tree = engine_tree(&rules);
        let before = tree.clone();
        let facts = fact_set(&facts);
        let subject = LintSubject { tree: &tree, facts: &facts, label: Some(label), question: "Is the change allowed now?" };
        let config = LintConfig::default();
        let a = lint::lint(subject, &config);
        let b = lint::lint(subject, &config);
        prop_assert_eq!(a, b);
        prop_assert_eq!(tree, before);
    }

    #[test]
    fn aggregate_ignores_report_order(scores in prop::array::uniform4(0u32..=100), threshold in 0u32..=100, rot in 0usize..4) {
        let reports: Vec<VerifierReport> = VerifierKind::ALL
            .into_iter()
            .zip(scores)
            .map(|(k, s)| VerifierReport::new(k, s, "f"))
            .collect();
        let mut shuffled = reports.clone();
        shuffled.rotate_left(rot);
        shuffled.swap(0, 3);
        let a = aggregate(&reports, threshold).unwrap();
        let b = aggregate(&shuffled, threshold).unwrap();
        prop_assert_eq!(&a, &b);
        let sum: u32 = scores.iter().sum();
        prop_assert_eq!(a.passed, sum >= 4 * threshold);
    }
}

//! Pass-through chain collapsing with a post-hoc equivalence guard.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::pass_through_links;
use crate::eval::{EvalOptions, Evaluator};
use crate::predicate::{FactSet, Predicate};
use crate::tree::{Rule, RuleTree};
use crate::validate::{validate, ValidationReport};

/// Universes up to this size are checked exhaustively in `Auto` mode.
pub const EXHAUSTIVE_LIMIT: usize = 12;
/// Number of random fact subsets drawn for larger universes in `Auto` mode.
pub const SAMPLED_SUBSETS: usize = 4096;
/// `Exhaustive` mode refuses universes larger than this.
pub const EXHAUSTIVE_MAX: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivalenceMode {
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] predicates, sampled above.
    Auto,
    /// Every subset; fails with `UniverseTooLarge` above [`EXHAUSTIVE_MAX`].
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub facts: Vec<Predicate>,
    pub original: Option<bool>,
    pub simplified: Option<bool>,
}

#[derive(Debug, Clone, Error)]
pub enum SimplifyError {
    #[error("rule tree has {} validation error(s)", .0.errors.len())]
    InvalidTree(ValidationReport),
    #[error("simplified tree failed validation: {} error(s)", .0.errors.len())]
    InvalidResult(ValidationReport),
    #[error("simplification would change the outcome for facts {:?}", .0.facts)]
    WouldChangeSemantics(Counterexample),
    #[error("universe of {0} predicates is too large for an exhaustive check")]
    UniverseTooLarge(usize),
}

/// Collapses every pass-through chain until none remains, then checks that
/// the target's value is unchanged for the fact subsets of the simplified
/// tree's predicate universe.
pub fn simplify(tree: &RuleTree) -> Result<RuleTree, SimplifyError> {
    let report = validate(tree);
    if !report.is_ok() {
        return Err(SimplifyError::InvalidTree(report));
    }

    let mut rules = tree.rules().to_vec();
    loop {
        let current = RuleTree::new(rules.clone()).expect("collapsing never empties a tree");
        let Some(link) = pass_through_links(&current).into_iter().next() else {
            break;
        };
        let inner = rules[link.inner].clone();
        let merged = Rule::new(rules[link.outer].head.clone(), inner.op, inner.conditions, inner.exceptions);
        let duplicate = rules
            .iter()
            .enumerate()
            .any(|(i, r)| i != link.outer && i != link.inner && *r == merged);
        rules[link.outer] = merged;
        if duplicate {
            let (first, second) = if link.outer > link.inner {
                (link.outer, link.inner)
            } else {
                (link.inner, link.outer)
            };
            rules.remove(first);
            rules.remove(second);
        } else {
            rules.remove(link.inner);
        }
    }

    let simplified = RuleTree::new(rules).expect("collapsing never empties a tree");
    let report = validate(&simplified);
    if !report.is_ok() {
        return Err(SimplifyError::InvalidResult(report));
    }
    check_equivalence(tree, &simplified, EquivalenceMode::Auto)?;
    Ok(simplified)
}

/// Compares the default-target value of two trees on fact subsets drawn from
/// `simplified`'s predicates. Returns the number of subsets checked.
pub fn check_equivalence(
    original: &RuleTree,
    simplified: &RuleTree,
    mode: EquivalenceMode,
) -> Result<usize, SimplifyError> {
    let before = Evaluator::new(original).map_err(|e| match e {
        crate::eval::EvalError::InvalidTree(r) => SimplifyError::InvalidTree(r),
        _ => unreachable!("constructing an evaluator only validates"),
    })?;
    let after = Evaluator::new(simplified).map_err(|e| match e {
        crate::eval::EvalError::InvalidTree(r) => SimplifyError::InvalidResult(r),
        _ => unreachable!("constructing an evaluator only validates"),
    })?;
    let options = EvalOptions::default()
        .with_target(original.default_target().clone())
        .with_budget(usize::MAX);
    let universe: Vec<Predicate> = simplified.predicates().into_iter().collect();
    let n = universe.len();

    let check = |mask: u64| -> Result<(), SimplifyError> {
        let facts: FactSet = universe
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, p)| p.clone())
            .collect();
        let a = before.evaluate(&facts, &options).ok().map(|r| r.value);
        let b = after.evaluate(&facts, &options).ok().map(|r| r.value);
        if a.is_none() || a != b {
            return Err(SimplifyError::WouldChangeSemantics(Counterexample {
                facts: facts.iter().cloned().collect(),
                original: a,
                simplified: b,
            }));
        }
        Ok(())
    };

    let exhaustive = match mode {
        EquivalenceMode::Auto => n <= EXHAUSTIVE_LIMIT,
        EquivalenceMode::Exhaustive if n > EXHAUSTIVE_MAX => {
            return Err(SimplifyError::UniverseTooLarge(n))
        }
        EquivalenceMode::Exhaustive => true,
    };

    if exhaustive {
        let total = 1u64 << n;
        for mask in 0..total {
            check(mask)?;
        }
        Ok(total as usize)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let width_mask = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
        check(0)?;
        check(width_mask)?;
        for _ in 2..SAMPLED_SUBSETS {
            check(rng.gen::<u64>() & width_mask)?;
        }
        Ok(SAMPLED_SUBSETS)
    }
}

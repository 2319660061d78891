//! Core of the formalex toolchain: defeasible rule trees, their evaluation,
//! linting and simplification, verifier scoring, the drafter/verifier
//! refinement loop and the curated sample corpus.

pub mod agent;
pub mod eval;
pub mod lint;
pub mod pipeline;
pub mod predicate;
pub mod store;
pub mod templates;
pub mod tree;
pub mod validate;
pub mod verify;

pub use eval::{
    evaluate, explain, DerivationTrace, EvalError, EvalOptions, EvalResult, EvalWarning, Evaluator,
    TraceEntry, WarningCode, DEFAULT_STEP_BUDGET,
};
pub use predicate::{FactSet, FactsError, Predicate, PredicateError};
pub use tree::{Operator, ParseError, Rule, RuleTree};
pub use validate::{validate, Issue, IssueCode, Location, ValidationReport};

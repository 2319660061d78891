//! Atomic predicates and closed-world fact sets.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Why a string was rejected as a predicate name.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("predicate name is empty")]
    Empty,
    #[error("predicate `{0}` must not start with a digit")]
    LeadingDigit(String),
    #[error("predicate `{name}` contains invalid character {ch:?}")]
    InvalidChar { name: String, ch: char },
}

/// An atomic proposition such as `processing_is_automated`.
///
/// Names are identifiers made of ASCII letters, digits and underscores and
/// never start with a digit. Comparison is exact and case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Predicate(String);

impl Predicate {
    pub fn new(name: impl Into<String>) -> Result<Self, PredicateError> {
        let name = name.into();
        let mut chars = name.chars();
        match chars.next() {
            None => return Err(PredicateError::Empty),
            Some(c) if c.is_ascii_digit() => return Err(PredicateError::LeadingDigit(name)),
            _ => {}
        }
        if let Some(ch) = name
            .chars()
            .find(|c| !(c.is_ascii_alphanumeric() || *c == '_'))
        {
            return Err(PredicateError::InvalidChar { name, ch });
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True for names carrying an explicit negation prefix (`no_*`, `not_*`).
    pub fn has_negation_prefix(&self) -> bool {
        self.0.starts_with("no_") || self.0.starts_with("not_")
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Predicate {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::str::FromStr for Predicate {
    type Err = PredicateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Predicate::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Errors produced while reading a fact document.
#[derive(Debug, Error)]
pub enum FactsError {
    #[error("facts document is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("facts document must be an array of strings")]
    NotAnArray,
    #[error("facts[{index}]: expected a string")]
    NotAString { index: usize },
    #[error("facts[{index}]: {source}")]
    BadPredicate {
        index: usize,
        #[source]
        source: PredicateError,
    },
}

/// The set of predicates asserted true for one scenario.
///
/// Anything not in the set (and not derivable by a rule) is false.
#[derive(Debug, Clone, Default)]
pub struct FactSet {
    facts: BTreeSet<Predicate>,
    duplicates: Vec<Predicate>,
}

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a fact set, remembering any predicate listed more than once.
    pub fn from_predicates(items: impl IntoIterator<Item = Predicate>) -> Self {
        let mut set = Self::new();
        for p in items {
            set.insert(p);
        }
        set
    }

    /// Parses a JSON array of predicate names.
    pub fn parse(document: &str) -> Result<Self, FactsError> {
        let value: serde_json::Value = serde_json::from_str(document)?;
        Self::from_json(&value)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, FactsError> {
        let items = value.as_array().ok_or(FactsError::NotAnArray)?;
        let mut set = Self::new();
        for (index, item) in items.iter().enumerate() {
            let name = item.as_str().ok_or(FactsError::NotAString { index })?;
            let p = Predicate::new(name).map_err(|source| FactsError::BadPredicate { index, source })?;
            set.insert(p);
        }
        Ok(set)
    }

    /// Inserts a fact; returns false (and records a duplicate) if it was present.
    pub fn insert(&mut self, p: Predicate) -> bool {
        if self.facts.contains(&p) {
            self.duplicates.push(p);
            false
        } else {
            self.facts.insert(p);
            true
        }
    }

    pub fn contains(&self, p: &Predicate) -> bool {
        self.facts.contains(p)
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.facts.iter().any(|p| p.as_str() == name)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Predicate> {
        self.facts.iter()
    }

    /// Predicates that appeared more than once in the source document.
    pub fn duplicates(&self) -> &[Predicate] {
        &self.duplicates
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("fact sets always serialize")
    }
}

impl PartialEq for FactSet {
    fn eq(&self, other: &Self) -> bool {
        self.facts == other.facts
    }
}

impl Eq for FactSet {}

impl FromIterator<Predicate> for FactSet {
    fn from_iter<I: IntoIterator<Item = Predicate>>(iter: I) -> Self {
        Self::from_predicates(iter)
    }
}

impl<'a> IntoIterator for &'a FactSet {
    type Item = &'a Predicate;
    type IntoIter = std::collections::btree_set::Iter<'a, Predicate>;

    fn into_iter(self) -> Self::IntoIter {
        self.facts.iter()
    }
}

impl Serialize for FactSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.facts.iter())
    }
}

impl<'de> Deserialize<'de> for FactSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<Predicate>::deserialize(deserializer)?;
        Ok(Self::from_predicates(items))
    }
}

//! Rule trees and their JSON document format.
//!
//! A document is either a single rule object or an array of rule objects:
//!
//! ```json
//! {
//!     "p": "gdpr_art20_data_portability",
//!     "op": "ALL",
//!     "conditions": ["data_subject_requests_portability", "processing_is_automated"],
//!     "exceptions": ["adversely_affects_others_rights"]
//! }
//! ```
//!
//! `exceptions` may be omitted. No other keys are accepted.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::predicate::Predicate;

/// How a rule combines its conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "ANY")]
    Any,
}

impl Operator {
    pub fn as_str(self) -> &'static str {
        match self {
            Operator::All => "ALL",
            Operator::Any => "ANY",
        }
    }

    /// Combines already-evaluated condition values.
    pub fn combine(self, mut values: impl Iterator<Item = bool>) -> bool {
        match self {
            Operator::All => values.all(|v| v),
            Operator::Any => values.any(|v| v),
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One defeasible rule: `head` holds when `op` is satisfied over
/// `conditions` and none of `exceptions` holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Rule {
    #[serde(rename = "p")]
    pub head: Predicate,
    pub op: Operator,
    pub conditions: Vec<Predicate>,
    pub exceptions: Vec<Predicate>,
}

impl Rule {
    pub fn new(
        head: Predicate,
        op: Operator,
        conditions: Vec<Predicate>,
        exceptions: Vec<Predicate>,
    ) -> Self {
        Self { head, op, conditions, exceptions }
    }

    /// Every predicate the rule body mentions, conditions first.
    pub fn body(&self) -> impl Iterator<Item = &Predicate> {
        self.conditions.iter().chain(self.exceptions.iter())
    }
}

/// An ordered collection of rules. The head of the first rule is the
/// default evaluation target.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleTree {
    rules: Vec<Rule>,
}

/// Errors from [`RuleTree::parse`].
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed rule-tree document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{location}: {message}")]
    Schema { location: String, message: String },
}

impl ParseError {
    fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Schema { location: location.into(), message: message.into() }
    }

    pub fn is_syntax(&self) -> bool {
        matches!(self, ParseError::Syntax(_))
    }
}

const RULE_KEYS: [&str; 4] = ["p", "op", "conditions", "exceptions"];

impl RuleTree {
    /// Builds a tree from rules. Returns `None` for an empty list.
    pub fn new(rules: Vec<Rule>) -> Option<Self> {
        if rules.is_empty() {
            None
        } else {
            Some(Self { rules })
        }
    }

    pub fn single(rule: Rule) -> Self {
        Self { rules: vec![rule] }
    }

    pub fn parse(document: &str) -> Result<Self, ParseError> {
        let value: Value = serde_json::from_str(document)?;
        Self::from_json(&value)
    }

    pub fn from_json(value: &Value) -> Result<Self, ParseError> {
        match value {
            Value::Object(_) => Ok(Self { rules: vec![parse_rule(value, "rule")?] }),
            Value::Array(items) => {
                if items.is_empty() {
                    return Err(ParseError::schema("rules", "a rule tree needs at least one rule"));
                }
                let rules = items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| parse_rule(item, &format!("rules[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Self { rules })
            }
            other => Err(ParseError::schema(
                "document",
                format!("expected a rule object or an array of rules, found {}", kind_of(other)),
            )),
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_rules(self) -> Vec<Rule> {
        self.rules
    }

    /// Head of the first rule.
    pub fn default_target(&self) -> &Predicate {
        &self.rules[0].head
    }

    pub fn is_head(&self, p: &Predicate) -> bool {
        self.rules.iter().any(|r| &r.head == p)
    }

    /// Indices of the rules whose head is `p`.
    pub fn rules_for<'a>(&'a self, p: &'a Predicate) -> impl Iterator<Item = usize> + 'a {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| &r.head == p)
            .map(|(i, _)| i)
    }

    /// Every predicate appearing anywhere in the tree.
    pub fn predicates(&self) -> BTreeSet<Predicate> {
        self.rules
            .iter()
            .flat_map(|r| std::iter::once(&r.head).chain(r.body()))
            .cloned()
            .collect()
    }

    /// Is `p` mentioned as a head, condition or exception?
    pub fn mentions(&self, p: &Predicate) -> bool {
        self.rules
            .iter()
            .any(|r| &r.head == p || r.body().any(|b| b == p))
    }

    /// Number of condition or exception slots that name `p`.
    pub fn reference_count(&self, p: &Predicate) -> usize {
        self.rules.iter().flat_map(|r| r.body()).filter(|b| *b == p).count()
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("rule trees always serialize")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule trees always serialize")
    }
}

impl Serialize for RuleTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.rules.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RuleTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        RuleTree::from_json(&value).map_err(serde::de::Error::custom)
    }
}

fn kind_of(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn parse_rule(value: &Value, location: &str) -> Result<Rule, ParseError> {
    let obj = value.as_object().ok_or_else(|| {
        ParseError::schema(location, format!("expected a rule object, found {}", kind_of(value)))
    })?;

    if let Some(extra) = obj.keys().find(|k| !RULE_KEYS.contains(&k.as_str())) {
        return Err(ParseError::schema(location, format!("unexpected field `{extra}`")));
    }

    let head = match obj.get("p") {
        None => return Err(ParseError::schema(location, "missing field `p`")),
        Some(v) => parse_predicate(v, &format!("{location}.p"))?,
    };

    let op = match obj.get("op") {
        None => return Err(ParseError::schema(location, "missing field `op`")),
        Some(Value::String(s)) if s == "ALL" => Operator::All,
        Some(Value::String(s)) if s == "ANY" => Operator::Any,
        Some(Value::String(s)) => {
            return Err(ParseError::schema(
                format!("{location}.op"),
                format!("expected \"ALL\" or \"ANY\", found \"{s}\""),
            ))
        }
        Some(other) => {
            return Err(ParseError::schema(
                format!("{location}.op"),
                format!("expected a string, found {}", kind_of(other)),
            ))
        }
    };

    let conditions = match obj.get("conditions") {
        None => return Err(ParseError::schema(location, "missing field `conditions`")),
        Some(v) => parse_predicate_list(v, &format!("{location}.conditions"))?,
    };

    let exceptions = match obj.get("exceptions") {
        None => Vec::new(),
        Some(v) => parse_predicate_list(v, &format!("{location}.exceptions"))?,
    };

    Ok(Rule { head, op, conditions, exceptions })
}

fn parse_predicate(value: &Value, location: &str) -> Result<Predicate, ParseError> {
    let raw = value.as_str().ok_or_else(|| {
        ParseError::schema(location, format!("expected a string, found {}", kind_of(value)))
    })?;
    Predicate::new(raw).map_err(|e| ParseError::schema(location, e.to_string()))
}

fn parse_predicate_list(value: &Value, location: &str) -> Result<Vec<Predicate>, ParseError> {
    let items = value.as_array().ok_or_else(|| {
        ParseError::schema(location, format!("expected an array, found {}", kind_of(value)))
    })?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| parse_predicate(v, &format!("{location}[{i}]")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ART20_SCHEMATIC: &str = r#"{
        "p": "gdpr_art20_data_portability",
        "op": "ALL",
        "conditions": [
            "data_subject_requests_portability",
            "processing_is_automated",
            "processing_based_on_contract_or_consent"
        ],
        "exceptions": ["adversely_affects_others_rights"]
    }"#;

    fn schema_message(doc: &str) -> String {
        match RuleTree::parse(doc) {
            Err(ParseError::Schema { location, message }) => format!("{location}: {message}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn single_object_is_promoted() {
        let tree = RuleTree::parse(ART20_SCHEMATIC).unwrap();
        assert_eq!(tree.len(), 1);
        let rule = &tree.rules()[0];
        assert_eq!(rule.head.as_str(), "gdpr_art20_data_portability");
        assert_eq!(rule.op, Operator::All);
        assert_eq!(rule.conditions.len(), 3);
        assert_eq!(rule.exceptions.len(), 1);
        assert_eq!(tree.default_target().as_str(), "gdpr_art20_data_portability");
    }

    #[test]
    fn exceptions_default_to_empty() {
        let tree = RuleTree::parse(r#"{"p":"a","op":"ALL","conditions":["b"]}"#).unwrap();
        assert!(tree.rules()[0].exceptions.is_empty());
    }

    #[test]
    fn bad_op_is_schema_error() {
        let msg = schema_message(r#"{"p":"a","op":"OR","conditions":["b"]}"#);
        assert!(msg.contains("rule.op"), "{msg}");
        assert!(msg.contains("\"OR\""), "{msg}");
    }

    #[test]
    fn schema_violations() {
        assert!(schema_message(r#"{"op":"ALL","conditions":["b"]}"#).contains("missing field `p`"));
        assert!(schema_message(r#"{"p":"a","op":"ALL"}"#).contains("missing field `conditions`"));
        assert!(schema_message(r#"{"p":"a","op":"ALL","conditions":["b"],"note":1}"#)
            .contains("unexpected field `note`"));
        assert!(schema_message(r#"{"p":"a","op":"all","conditions":["b"]}"#).contains("\"all\""));
        assert!(schema_message(r#"{"p":"a","op":"ALL","conditions":"b"}"#).contains("expected an array"));
        assert!(schema_message(r#"[{"p":"a","op":"ALL","conditions":["b", 3]}]"#)
            .contains("rules[0].conditions[1]"));
        assert!(schema_message(r#"{"p":"1a","op":"ALL","conditions":["b"]}"#).contains("rule.p"));
        assert!(schema_message("[]").contains("at least one rule"));
        assert!(schema_message("\"a\"").contains("found a string"));
    }

    #[test]
    fn malformed_json_is_syntax_error() {
        assert!(RuleTree::parse("{\"p\": ").unwrap_err().is_syntax());
    }

    #[test]
    fn serializes_with_wire_field_names() {
        let tree = RuleTree::parse(r#"{"p":"a","op":"ANY","conditions":["b","c"]}"#).unwrap();
        assert_eq!(
            serde_json::to_string(&tree).unwrap(),
            r#"[{"p":"a","op":"ANY","conditions":["b","c"],"exceptions":[]}]"#
        );
    }

    #[test]
    fn reference_counting() {
        let tree = RuleTree::parse(
            r#"[{"p":"a","op":"ALL","conditions":["b","c"],"exceptions":["d"]},
                {"p":"b","op":"ANY","conditions":["c"]}]"#,
        )
        .unwrap();
        let c = Predicate::new("c").unwrap();
        assert_eq!(tree.reference_count(&c), 2);
        assert_eq!(tree.reference_count(tree.default_target()), 0);
        assert_eq!(tree.predicates().len(), 4);
        assert_eq!(tree.rules_for(&Predicate::new("b").unwrap()).collect::<Vec<_>>(), vec![1]);
    }
}

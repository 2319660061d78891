//! Static per-role tokens passed in the `X-Auth-Token` header.
//!
//! Token lists look like `tok1=annotator:alice, tok2=meta:bob`. Entries may be
//! separated by commas or newlines; `#` starts a comment line.

use std::collections::HashMap;
use std::fmt;

use axum::http::HeaderMap;
use serde::Serialize;

pub const TOKEN_HEADER: &str = "x-auth-token";
pub const TOKENS_ENV: &str = "FORMALEX_TOKENS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Annotator,
    Meta,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Annotator => "annotator",
            Role::Meta => "meta",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Identity {
    pub role: Role,
    pub id: String,
}

#[derive(Debug, Clone, Default)]
pub struct Tokens {
    by_token: HashMap<String, Identity>,
}

impl Tokens {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut by_token = HashMap::new();
        for entry in text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(|l| l.split(','))
            .map(str::trim)
            .filter(|e| !e.is_empty())
        {
            let (token, who) = entry
                .split_once('=')
                .ok_or_else(|| format!("token entry `{entry}` is not `token=role:id`"))?;
            let (role, id) = who
                .split_once(':')
                .ok_or_else(|| format!("token entry `{entry}` is not `token=role:id`"))?;
            let role = match role.trim() {
                "annotator" => Role::Annotator,
                "meta" => Role::Meta,
                other => return Err(format!("unknown role `{other}` (expected annotator or meta)")),
            };
            let (token, id) = (token.trim(), id.trim());
            if token.is_empty() || id.is_empty() {
                return Err(format!("token entry `{entry}` has an empty token or id"));
            }
            if by_token.insert(token.to_string(), Identity { role, id: id.to_string() }).is_some() {
                return Err("a token is listed twice".to_string());
            }
        }
        Ok(Self { by_token })
    }

    pub fn insert(&mut self, token: impl Into<String>, role: Role, id: impl Into<String>) {
        self.by_token.insert(token.into(), Identity { role, id: id.into() });
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_token.len()
    }

    pub fn lookup(&self, headers: &HeaderMap) -> Option<&Identity> {
        let token = headers.get(TOKEN_HEADER)?.to_str().ok()?;
        self.by_token.get(token.trim())
    }
}

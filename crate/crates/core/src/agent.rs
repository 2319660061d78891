//! Agent transport: a chat-style remote endpoint and a scripted replay
//! client for offline runs.
//!
//! The remote wire format is a POST to `{base}/chat/completions` with
//! `{"model": .., "messages": [{"role": "system", "content": instruction},
//! {"role": "user", "content": context}]}`. The reply text is read from
//! `choices[0].message.content`, falling back to `messages[0].content`.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::templates::AgentRole;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("reply did not contain agent text: {0}")]
    BadEnvelope(String),
    #[error("scripted transcript has no more replies")]
    Exhausted,
}

/// Anything that turns an instruction and its context into reply text.
pub trait AgentClient: Send + Sync {
    fn send(&self, instruction: &str, context: &str) -> Result<String, AgentError>;
}

impl<T: AgentClient + ?Sized> AgentClient for Arc<T> {
    fn send(&self, instruction: &str, context: &str) -> Result<String, AgentError> {
        (**self).send(instruction, context)
    }
}

impl<T: AgentClient + ?Sized> AgentClient for &T {
    fn send(&self, instruction: &str, context: &str) -> Result<String, AgentError> {
        (**self).send(instruction, context)
    }
}

pub const ENV_BASE_URL: &str = "AGENT_BASE_URL";
pub const ENV_MODEL: &str = "AGENT_MODEL";
pub const ENV_API_KEY: &str = "AGENT_API_KEY";
pub const ENV_TIMEOUT: &str = "AGENT_TIMEOUT_SECS";
pub const ENV_RETRIES: &str = "AGENT_RETRIES";

#[derive(Debug, Clone, Error)]
pub enum ConfigError {
    #[error("environment variable {0} is not set")]
    Missing(&'static str),
    #[error("environment variable {name} has invalid value `{value}`")]
    Invalid { name: &'static str, value: String },
}

#[derive(Clone)]
pub struct AgentConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after a transport failure or 5xx response.
    pub retries: u32,
}

impl std::fmt::Debug for AgentConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .field("retries", &self.retries)
            .finish()
    }
}

impl AgentConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retries: 0,
        }
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let base_url = get(ENV_BASE_URL).ok_or(ConfigError::Missing(ENV_BASE_URL))?;
        let model = get(ENV_MODEL).ok_or(ConfigError::Missing(ENV_MODEL))?;
        let mut config = Self::new(base_url, model);
        config.api_key = get(ENV_API_KEY).filter(|k| !k.is_empty());
        if let Some(raw) = get(ENV_TIMEOUT) {
            let secs: u64 = raw
                .parse()
                .map_err(|_| ConfigError::Invalid { name: ENV_TIMEOUT, value: raw.clone() })?;
            config.timeout = Duration::from_secs(secs);
        }
        if let Some(raw) = get(ENV_RETRIES) {
            config.retries = raw
                .parse()
                .map_err(|_| ConfigError::Invalid { name: ENV_RETRIES, value: raw.clone() })?;
        }
        Ok(config)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Chat endpoint client. Blocking; safe to share between threads.
pub struct RemoteAgent {
    config: AgentConfig,
    http: ureq::Agent,
}

impl RemoteAgent {
    pub fn new(config: AgentConfig) -> Self {
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, http }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<String, AgentError> {
        let mut request = self.http.post(&self.config.endpoint());
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(AgentError::Http { status, body: text });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| AgentError::BadEnvelope(e.to_string()))?;
        extract_reply_text(&value)
    }
}

/// Pulls the agent text out of a chat reply envelope.
pub fn extract_reply_text(value: &Value) -> Result<String, AgentError> {
    let candidates = [
        value.pointer("/choices/0/message/content"),
        value.pointer("/messages/0/content"),
        value.pointer("/message/content"),
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| AgentError::BadEnvelope("no message content in reply".into()))
}

impl AgentClient for RemoteAgent {
    fn send(&self, instruction: &str, context: &str) -> Result<String, AgentError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": instruction},
                {"role": "user", "content": context},
            ],
        });
        let mut last = None;
        for attempt in 0..=self.config.retries {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e @ AgentError::Transport(_)) => last = Some(e),
                Err(e @ AgentError::Http { status, .. }) if status >= 500 => last = Some(e),
                Err(e) => return Err(e),
            }
            tracing::warn!(attempt, endpoint = %self.config.endpoint(), "agent call failed");
        }
        Err(last.expect("at least one attempt is made"))
    }
}

/// One entry in a scripted agent's queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedReply {
    Text(String),
    Fail(AgentError),
}

impl From<&str> for ScriptedReply {
    fn from(s: &str) -> Self {
        ScriptedReply::Text(s.to_string())
    }
}

impl From<String> for ScriptedReply {
    fn from(s: String) -> Self {
        ScriptedReply::Text(s)
    }
}

/// A request seen by a [`ScriptedAgent`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub instruction: String,
    pub context: String,
}

/// Replays a fixed list of replies in order and records every request.
#[derive(Debug, Default)]
pub struct ScriptedAgent {
    replies: Mutex<VecDeque<ScriptedReply>>,
    seen: Mutex<Vec<Exchange>>,
}

impl ScriptedAgent {
    pub fn new<R: Into<ScriptedReply>>(replies: impl IntoIterator<Item = R>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.seen.lock().expect("scripted agent lock poisoned").clone()
    }

    pub fn calls(&self) -> usize {
        self.seen.lock().expect("scripted agent lock poisoned").len()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("scripted agent lock poisoned").len()
    }
}

impl AgentClient for ScriptedAgent {
    fn send(&self, instruction: &str, context: &str) -> Result<String, AgentError> {
        self.seen.lock().expect("scripted agent lock poisoned").push(Exchange {
            instruction: instruction.to_string(),
            context: context.to_string(),
        });
        match self.replies.lock().expect("scripted agent lock poisoned").pop_front() {
            Some(ScriptedReply::Text(t)) => Ok(t),
            Some(ScriptedReply::Fail(e)) => Err(e),
            None => Err(AgentError::Exhausted),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("line {line}: expected a `--- <n> <role> ---` header before any reply text")]
    TextBeforeHeader { line: usize },
    #[error("line {line}: malformed header `{header}`")]
    BadHeader { line: usize, header: String },
    #[error("line {line}: reply number {found} out of sequence (expected {expected})")]
    OutOfSequence { line: usize, expected: usize, found: usize },
}

/// A recorded list of agent replies.
///
/// Each reply starts with a header line `--- <n> <role> ---` where `n`
/// counts from 1 and `role` is `drafter`, `scenario` or `legal`. The reply
/// text is everything up to the next header, with surrounding blank lines
/// removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<(AgentRole, String)>,
}

impl Transcript {
    pub fn parse(text: &str) -> Result<Self, TranscriptError> {
        let mut entries: Vec<(AgentRole, String)> = Vec::new();
        let mut current: Option<(AgentRole, Vec<&str>)> = None;

        let flush = |current: &mut Option<(AgentRole, Vec<&str>)>, entries: &mut Vec<(AgentRole, String)>| {
            if let Some((role, lines)) = current.take() {
                entries.push((role, lines.join("\n").trim_matches('\n').to_string()));
            }
        };

        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.starts_with("--- ") && trimmed.ends_with(" ---") && trimmed.len() > 8 {
                let inner = &trimmed[4..trimmed.len() - 4];
                let mut parts = inner.split_whitespace();
                let bad = || TranscriptError::BadHeader { line: lineno, header: trimmed.to_string() };
                let n: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
                let role: AgentRole = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
                if parts.next().is_some() {
                    return Err(bad());
                }
                flush(&mut current, &mut entries);
                let expected = entries.len() + 1;
                if n != expected {
                    return Err(TranscriptError::OutOfSequence { line: lineno, expected, found: n });
                }
                current = Some((role, Vec::new()));
            } else if let Some((_, lines)) = current.as_mut() {
                lines.push(line);
            } else if !trimmed.is_empty() {
                return Err(TranscriptError::TextBeforeHeader { line: lineno });
            }
        }
        flush(&mut current, &mut entries);
        Ok(Self { entries })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (role, text)) in self.entries.iter().enumerate() {
            out.push_str(&format!("--- {} {} ---\n{}\n", i + 1, role, text));
        }
        out
    }

    pub fn replies_for(&self, role: AgentRole) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(r, _)| *r == role)
            .map(|(_, t)| t.clone())
            .collect()
    }

    /// One scripted agent per role, each replaying that role's replies in order.
    pub fn agents(&self) -> BTreeMap<AgentRole, Arc<ScriptedAgent>> {
        AgentRole::ALL
            .into_iter()
            .map(|role| (role, Arc::new(ScriptedAgent::new(self.replies_for(role)))))
            .collect()
    }
}

/// One client per agent role.
#[derive(Clone)]
pub struct RoleAgents {
    pub drafter: Arc<dyn AgentClient>,
    pub scenario: Arc<dyn AgentClient>,
    pub legal: Arc<dyn AgentClient>,
}

impl RoleAgents {
    /// All three roles share one remote endpoint.
    pub fn remote(config: AgentConfig) -> Self {
        let agent: Arc<dyn AgentClient> = Arc::new(RemoteAgent::new(config));
        Self { drafter: agent.clone(), scenario: agent.clone(), legal: agent }
    }

    /// Fresh replay agents for each role of `transcript`.
    pub fn scripted(transcript: &Transcript) -> Self {
        let mut agents = transcript.agents();
        let mut take = |role| -> Arc<dyn AgentClient> { agents.remove(&role).expect("every role has an agent") };
        Self { drafter: take(AgentRole::Drafter), scenario: take(AgentRole::Scenario), legal: take(AgentRole::Legal) }
    }

    pub fn as_agents(&self) -> crate::pipeline::Agents<'_> {
        crate::pipeline::Agents { drafter: &*self.drafter, scenario: &*self.scenario, legal: &*self.legal }
    }
}

/// Wraps a client and records every successful reply into a transcript.
pub struct RecordingAgent<A> {
    inner: A,
    role: AgentRole,
    log: Arc<Mutex<Transcript>>,
}

impl<A: AgentClient> RecordingAgent<A> {
    pub fn new(inner: A, role: AgentRole, log: Arc<Mutex<Transcript>>) -> Self {
        Self { inner, role, log }
    }
}

impl<A: AgentClient> AgentClient for RecordingAgent<A> {
    fn send(&self, instruction: &str, context: &str) -> Result<String, AgentError> {
        let reply = self.inner.send(instruction, context)?;
        self.log
            .lock()
            .expect("transcript lock poisoned")
            .entries
            .push((self.role, reply.clone()));
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_agent_replays_in_order() {
        let agent = ScriptedAgent::new([
            ScriptedReply::from("one"),
            ScriptedReply::Fail(AgentError::Transport("down".into())),
        ]);
        assert_eq!(agent.send("i", "c").unwrap(), "one");
        assert!(matches!(agent.send("i", "c2"), Err(AgentError::Transport(_))));
        assert_eq!(agent.send("i", "c3"), Err(AgentError::Exhausted));
        assert_eq!(agent.calls(), 3);
        assert_eq!(agent.exchanges()[1].context, "c2");
    }

    #[test]
    fn transcript_parsing() {
        let text = "--- 1 drafter ---\nline a\n\nline b\n\n--- 2 scenario ---\n{\"score\": 80, \"feedback\": \"ok\"}\n--- 3 drafter ---\nsecond\n";
        let t = Transcript::parse(text).unwrap();
        assert_eq!(t.entries.len(), 3);
        assert_eq!(t.entries[0], (AgentRole::Drafter, "line a\n\nline b".to_string()));
        assert_eq!(t.replies_for(AgentRole::Drafter), vec!["line a\n\nline b", "second"]);
        assert_eq!(Transcript::parse(&t.render()).unwrap(), t);
    }

    #[test]
    fn transcript_errors() {
        assert_eq!(
            Transcript::parse("hello\n--- 1 drafter ---\n"),
            Err(TranscriptError::TextBeforeHeader { line: 1 })
        );
        assert!(matches!(
            Transcript::parse("--- 2 drafter ---\nx\n"),
            Err(TranscriptError::OutOfSequence { expected: 1, found: 2, .. })
        ));
        assert!(matches!(
            Transcript::parse("--- 1 judge ---\nx\n"),
            Err(TranscriptError::BadHeader { line: 1, .. })
        ));
    }

    #[test]
    fn transcript_agents_split_by_role() {
        let t = Transcript::parse("--- 1 legal ---\nL\n--- 2 drafter ---\nD\n").unwrap();
        let agents = t.agents();
        assert_eq!(agents[&AgentRole::Drafter].send("", "").unwrap(), "D");
        assert_eq!(agents[&AgentRole::Legal].send("", "").unwrap(), "L");
        assert_eq!(agents[&AgentRole::Scenario].send("", ""), Err(AgentError::Exhausted));
    }

    #[test]
    fn reply_envelopes() {
        let openai = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(extract_reply_text(&openai).unwrap(), "hi");
        let plain = json!({"messages": [{"role": "assistant", "content": "yo"}]});
        assert_eq!(extract_reply_text(&plain).unwrap(), "yo");
        assert!(extract_reply_text(&json!({"nope": 1})).is_err());
    }

    #[test]
    fn config_from_lookup() {
        let env: BTreeMap<&str, &str> = [
            (ENV_BASE_URL, "http://localhost:9999/v1/"),
            (ENV_MODEL, "local-model"),
            (ENV_API_KEY, "secret"),
            (ENV_TIMEOUT, "5"),
        ]
        .into();
        let config = AgentConfig::from_lookup(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(config.endpoint(), "http://localhost:9999/v1/chat/completions");
        assert_eq!(config.timeout, Duration::from_secs(5));
        assert!(!format!("{config:?}").contains("secret"));
        assert!(matches!(
            AgentConfig::from_lookup(|_| None),
            Err(ConfigError::Missing(ENV_BASE_URL))
        ));
    }

    #[test]
    fn recording_agent_builds_a_transcript() {
        let log = Arc::new(Mutex::new(Transcript::default()));
        let agent = RecordingAgent::new(ScriptedAgent::new(["r1"]), AgentRole::Scenario, log.clone());
        agent.send("i", "c").unwrap();
        let t = log.lock().unwrap().clone();
        assert_eq!(t.render(), "--- 1 scenario ---\nr1\n");
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use formalex_core::store::{Corpus, Sample, Status};
use formalex_core::verify::{VerifierKind, VerifierReport};
use formalex_core::{FactSet, RuleTree};
use formalex_service::{AppState, BackgroundServer, Role, ServiceConfig, Tokens};
use serde_json::Value;
use uuid::Uuid;

pub const ANN_A: &str = "tok-a";
pub const ANN_B: &str = "tok-b";
pub const META: &str = "tok-m";

pub fn tokens() -> Tokens {
    let mut t = Tokens::default();
    t.insert(ANN_A, Role::Annotator, "alice");
    t.insert(ANN_B, Role::Annotator, "bob");
    t.insert(META, Role::Meta, "carol");
    for i in 0..16 {
        t.insert(format!("tok-{i}"), Role::Annotator, format!("ann{i}"));
    }
    t
}

pub fn art20_sample(with_exception: bool) -> Sample {
    let tree = RuleTree::parse(
        r#"{"p": "gdpr_art20_data_portability", "op": "ALL",
            "conditions": ["data_subject_requests_portability", "data_is_personal_data_of_subject",
                           "processing_based_on_consent_or_contract", "processing_is_automated"],
            "exceptions": ["adversely_affects_others_rights"]}"#,
    )
    .unwrap();
    let mut facts = vec![
        "data_subject_requests_portability",
        "data_is_personal_data_of_subject",
        "processing_based_on_consent_or_contract",
        "processing_is_automated",
    ];
    if with_exception {
        facts.push("adversely_affects_others_rights");
    }
    let facts = FactSet::parse(&serde_json::to_string(&facts).unwrap()).unwrap();
    let reports = VerifierKind::ALL.into_iter().map(|k| VerifierReport::new(k, 90, "ok")).collect();
    Sample::new(
        "GDPR Art. 20",
        "A subscriber asks a streaming service for an export of their playlists.",
        "Must the service provide the export?",
        tree,
        facts,
        !with_exception,
        reports,
    )
}

/// A corpus with `n` queued samples; returns their ids in file order.
pub fn seed(path: &Path, n: usize) -> Vec<Uuid> {
    let mut corpus = Corpus::open(path).unwrap();
    (0..n)
        .map(|i| corpus.append(art20_sample(i % 2 == 1).with_status(Status::Queued)).unwrap())
        .collect()
}

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub server: BackgroundServer,
    pub ids: Vec<Uuid>,
}

pub fn start(n: usize, configure: impl FnOnce(&mut ServiceConfig)) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let ids = seed(&corpus, n);
    let mut config = ServiceConfig::new(&corpus);
    config.tokens = tokens();
    configure(&mut config);
    let state: Arc<AppState> = AppState::open(config).unwrap();
    let server = BackgroundServer::start(state, "127.0.0.1:0".parse().unwrap()).unwrap();
    Harness { dir, corpus, server, ids }
}

pub fn client() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn get(h: &Harness, path: &str, token: Option<&str>) -> (u16, Value) {
    let mut req = client().get(&h.server.url(path));
    if let Some(t) = token {
        req = req.header("x-auth-token", t);
    }
    let mut resp = req.call().unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub fn post(h: &Harness, path: &str, token: Option<&str>, body: &str) -> (u16, Value) {
    let mut req = client().post(&h.server.url(path)).header("content-type", "application/json");
    if let Some(t) = token {
        req = req.header("x-auth-token", t);
    }
    let mut resp = req.send(body).unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub const GOOD_VERDICT: &str =
    r#"{"relevant": true, "well_formalized": true, "logically_sound": true, "category": "good", "notes": "clear"}"#;

pub fn assigned_id(body: &Value) -> Uuid {
    body["assignment"]["sample_id"].as_str().unwrap().parse().unwrap()
}

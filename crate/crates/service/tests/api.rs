mod common;

use std::collections::HashSet;
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use common::*;
use formalex_core::agent::{RoleAgents, Transcript};
use formalex_core::explain;
use formalex_core::store::Corpus;
use serde_json::Value;

#[test]
fn queue_assigns_distinct_samples() {
    let h = start(2, |_| {});
    let (sa, a) = get(&h, "/queue/next?annotator=alice", Some(ANN_A));
    let (sb, b) = get(&h, "/queue/next?annotator=bob", Some(ANN_B));
    assert_eq!((sa, sb), (200, 200));
    assert_ne!(assigned_id(&a), assigned_id(&b));
    assert_eq!(b["remaining"], 0);
    let (_, empty) = get(&h, "/queue/next", Some(ANN_A));
    assert_eq!(empty["sample"], Value::Null);
    let (_, mine) = get(&h, "/queue", Some(ANN_A));
    assert_eq!(mine["open"].as_array().unwrap().len(), 1);
}

#[test]
fn queue_requires_matching_annotator_token() {
    let h = start(1, |_| {});
    assert_eq!(get(&h, "/queue/next?annotator=bob", Some(ANN_A)).0, 403);
    assert_eq!(get(&h, "/queue/next", None).0, 401);
    assert_eq!(get(&h, "/queue/next", Some(META)).0, 403);
}

#[test]
fn verdict_by_non_assignee_conflicts() {
    let h = start(1, |_| {});
    let (_, a) = get(&h, "/queue/next", Some(ANN_A));
    let id = assigned_id(&a);
    let (status, body) = post(&h, &format!("/samples/{id}/verdict"), Some(ANN_B), GOOD_VERDICT);
    assert_eq!(status, 409);
    assert_eq!(body["error"], "not_assignee");
    let (status, body) = post(&h, &format!("/samples/{id}/verdict"), Some(ANN_A), GOOD_VERDICT);
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["sample"]["status"], "human_verified");
}

#[test]
fn request_validation_status_codes() {
    let h = start(1, |_| {});
    let id = h.ids[0];
    assert_eq!(get(&h, "/samples/not-a-uuid", None).0, 404);
    assert_eq!(get(&h, &format!("/samples/{}", uuid::Uuid::new_v4()), None).0, 404);
    get(&h, "/queue/next", Some(ANN_A));
    let path = format!("/samples/{id}/verdict");
    assert_eq!(post(&h, &path, Some(ANN_A), "{not json").0, 422);
    assert_eq!(post(&h, &path, Some(ANN_A), r#"{"relevant": true}"#).0, 422);
    let bad_good = r#"{"relevant": true, "well_formalized": false, "logically_sound": true, "category": "good"}"#;
    assert_eq!(post(&h, &path, Some(ANN_A), bad_good).0, 422);
    assert_eq!(post(&h, &path, None, GOOD_VERDICT).0, 401);
    assert_eq!(post(&h, &path, Some("bogus"), GOOD_VERDICT).0, 401);
    assert_eq!(post(&h, &format!("/samples/{id}/meta"), Some(ANN_A), r#"{"decision": "confirm"}"#).0, 403);
    // Meta review before any verdict is an illegal transition.
    assert_eq!(post(&h, &format!("/samples/{id}/meta"), Some(META), r#"{"decision": "confirm"}"#).0, 409);
    assert_eq!(get(&h, "/samples?status=bogus", None).0, 422);
}

#[test]
fn no_tokens_means_no_mutations() {
    let h = start(1, |c| c.tokens = Default::default());
    assert_eq!(get(&h, "/queue/next", Some(ANN_A)).0, 401);
    let path = format!("/samples/{}/verdict", h.ids[0]);
    assert_eq!(post(&h, &path, Some(ANN_A), GOOD_VERDICT).0, 401);
    assert_eq!(get(&h, "/samples", None).0, 200);
}

#[test]
fn review_flow_and_export() {
    let h = start(3, |_| {});
    let (_, a) = get(&h, "/queue/next", Some(ANN_A));
    let (_, b) = get(&h, "/queue/next", Some(ANN_B));
    let (good, overturned) = (assigned_id(&a), assigned_id(&b));
    assert_eq!(post(&h, &format!("/samples/{good}/verdict"), Some(ANN_A), GOOD_VERDICT).0, 200);
    assert_eq!(post(&h, &format!("/samples/{overturned}/verdict"), Some(ANN_B), GOOD_VERDICT).0, 200);
    let (s, body) = post(&h, &format!("/samples/{good}/meta"), Some(META), r#"{"decision": "confirm", "rationale": "sound"}"#);
    assert_eq!(s, 200);
    assert_eq!(body["final_category"], "good");
    let (s, body) = post(&h, &format!("/samples/{overturned}/meta"), Some(META), r#"{"decision": "overturn"}"#);
    assert_eq!(s, 200);
    assert_eq!(body["final_category"], "bad");

    let mut resp = client().get(&h.server.url("/export")).call().unwrap();
    assert_eq!(resp.headers().get("content-type").unwrap(), "application/x-ndjson");
    let text = resp.body_mut().read_to_string().unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let exported: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(exported["id"], good.to_string());

    let (_, stats) = get(&h, "/stats", None);
    assert_eq!(stats["total"], 3);
    assert_eq!(stats["by_status"]["meta_reviewed"], 2);
    assert_eq!(stats["final_categories"]["bad"], 1);
    assert_eq!(stats["curated"], 1);

    let (_, listed) = get(&h, "/samples?status=meta_reviewed&per_page=1&page=2", None);
    assert_eq!(listed["total"], 2);
    assert_eq!(listed["items"].as_array().unwrap().len(), 1);

    // Everything was persisted.
    let corpus = Corpus::open(&h.corpus).unwrap();
    assert_eq!(corpus.curated().count(), 1);
}

#[test]
fn sample_detail_trace_matches_fresh_explain() {
    let h = start(2, |_| {});
    for id in &h.ids {
        let (s, body) = get(&h, &format!("/samples/{id}"), None);
        assert_eq!(s, 200);
        let corpus = Corpus::open(&h.corpus).unwrap();
        let sample = corpus.get(*id).unwrap();
        let fresh = explain(&sample.rule_tree, &sample.facts, None).unwrap();
        assert_eq!(body["trace"]["entries"], serde_json::to_value(&fresh).unwrap());
        assert_eq!(body["trace"]["value"], sample.label);
    }
}

#[test]
fn concurrent_queue_next_is_disjoint() {
    let h = Arc::new(start(16, |_| {}));
    let barrier = Arc::new(Barrier::new(16));
    let threads: Vec<_> = (0..16)
        .map(|i| {
            let (h, barrier) = (h.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                let (s, body) = get(&h, "/queue/next", Some(&format!("tok-{i}")));
                assert_eq!(s, 200);
                assigned_id(&body)
            })
        })
        .collect();
    let ids: HashSet<_> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    assert_eq!(ids.len(), 16);
    assert_eq!(ids, h.ids.iter().copied().collect());
}

#[test]
fn concurrent_double_verdict_first_writer_wins() {
    let h = Arc::new(start(1, |_| {}));
    let (_, a) = get(&h, "/queue/next", Some(ANN_A));
    let id = assigned_id(&a);
    let barrier = Arc::new(Barrier::new(2));
    let threads: Vec<_> = (0..2)
        .map(|_| {
            let (h, barrier) = (h.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                post(&h, &format!("/samples/{id}/verdict"), Some(ANN_A), GOOD_VERDICT).0
            })
        })
        .collect();
    let mut codes: Vec<u16> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    codes.sort();
    assert_eq!(codes, [200, 409]);
    let corpus = Corpus::open(&h.corpus).unwrap();
    assert!(corpus.get(id).unwrap().verdict.is_some());
}

#[test]
fn pipeline_run_appends_and_queues() {
    let transcript = Transcript::parse(
        &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/transcripts/accept_second.txt"))
            .unwrap(),
    )
    .unwrap();
    let h = start(0, move |c| {
        c.agents = Some(Arc::new(move || Ok(RoleAgents::scripted(&transcript))));
    });
    assert_eq!(post(&h, "/pipeline/run", None, r#"{"article_ref": "GDPR Art. 20"}"#).0, 401);
    assert_eq!(post(&h, "/pipeline/run", Some(ANN_A), r#"{"article": "x"}"#).0, 422);
    let (s, body) = post(&h, "/pipeline/run", Some(ANN_A), r#"{"article_ref": "GDPR Art. 20", "config": {"max_iterations": 5}}"#);
    assert_eq!(s, 202);
    let run_id = body["run_id"].as_str().unwrap().to_string();
    let deadline = Instant::now() + Duration::from_secs(30);
    let run = loop {
        let (_, run) = get(&h, &format!("/pipeline/runs/{run_id}"), None);
        if run["status"] != "pending" && run["status"] != "running" {
            break run;
        }
        assert!(Instant::now() < deadline, "run did not finish");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(run["status"], "accepted", "{run}");
    assert_eq!(run["history"]["outcome"]["iteration"], 2);
    let sample_id: uuid::Uuid = run["sample_id"].as_str().unwrap().parse().unwrap();
    let corpus = Corpus::open(&h.corpus).unwrap();
    assert_eq!(corpus.get(sample_id).unwrap().status.as_str(), "queued");
    assert_eq!(corpus.histories().unwrap().len(), 1);
    assert_eq!(get(&h, "/pipeline/runs/nope", None).0, 404);
}

#[test]
fn pipeline_disabled_without_agents() {
    let h = start(0, |_| {});
    assert_eq!(post(&h, "/pipeline/run", Some(ANN_A), r#"{"article_ref": "GDPR Art. 20"}"#).0, 503);
}

#[test]
fn serves_ui_assets_when_configured() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>review</html>").unwrap();
    let dir = ui.path().to_path_buf();
    let h = start(0, move |c| c.ui_dir = Some(dir));
    let mut resp = client().get(&h.server.url("/some/client/route")).call().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert!(resp.body_mut().read_to_string().unwrap().contains("review"));
    assert_eq!(get(&h, "/stats", None).0, 200);
}

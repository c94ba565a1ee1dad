mod common;

use std::time::Duration;

use common::{fixture_dir, TestServer, TOKEN};
use narrator_server::config::{BackendConfig, ServiceConfig};
use serde_json::{json, Value};

const WAIT: Duration = Duration::from_secs(5);

fn publish(set_id: &str) -> Value {
    json!({"type": "SelectAndPublish", "items": [{"set_id": set_id, "index": 0}]})
}

fn first_selectable(state: &Value) -> String {
    state["pending_sets"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["sentences"][0]["selectable"] == true)
        .map(|s| s["set_id"].as_str().unwrap().to_string())
        .expect("a selectable set")
}

#[tokio::test(flavor = "multi_thread")]
async fn typed_context_is_visible_in_state() {
    let server = TestServer::mock().await;
    let id = server.create_session().await;
    let events = server
        .act_ok(&id, json!({"type": "TypeContext", "text": "The door opened."}))
        .await;
    assert_eq!(events[0]["event"]["type"], "Action");
    let state = server.state(&id).await;
    assert_eq!(state["context"][0]["text"], "The door opened.");
    assert_eq!(state["state"], "Running");
}

#[tokio::test(flavor = "multi_thread")]
async fn generate_and_publish_reaches_the_stage() {
    let server = TestServer::mock().await;
    let id = server.create_session().await;
    server
        .act_ok(&id, json!({"type": "TypeContext", "text": "A pizzeria at midnight."}))
        .await;
    server.act_ok(&id, json!({"type": "RequestGeneration"})).await;
    let state = server.state(&id).await;
    assert_eq!(state["pending_sets"].as_array().unwrap().len(), 3);
    let set_id = first_selectable(&state);
    let text = state["pending_sets"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["set_id"] == set_id.as_str())
        .unwrap()["sentences"][0]["text"]
        .clone();

    let stage: Value = server
        .client
        .get(server.url(&format!("/v1/sessions/{id}/stage")))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(stage["avatar_state"], "Listening");

    server.act_ok(&id, publish(&set_id)).await;
    let stage: Value = server
        .client
        .get(server.url(&format!("/v1/sessions/{id}/stage")))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(stage["avatar_state"], "Speaking");
    let lines = stage["lines"].as_array().unwrap();
    assert_eq!(lines.last().unwrap()["text"], text);
    let raw = serde_json::to_string(&stage).unwrap();
    assert!(!raw.contains("pending"));
    assert!(!raw.contains("verdict"));
}

#[tokio::test(flavor = "multi_thread")]
async fn stale_selection_is_a_conflict() {
    let server = TestServer::mock().await;
    let id = server.create_session().await;
    server
        .act_ok(&id, json!({"type": "TypeContext", "text": "Rain on the window."}))
        .await;
    server.act_ok(&id, json!({"type": "RequestGeneration"})).await;
    let stale = first_selectable(&server.state(&id).await);
    server.act_ok(&id, json!({"type": "RequestGeneration"})).await;

    let resp = server.act(&id, publish(&stale)).await;
    assert_eq!(resp.status(), 409);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["code"], "InvalidSelection");
    // The session is still usable.
    let fresh = first_selectable(&server.state(&id).await);
    server.act_ok(&id, publish(&fresh)).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_and_invalid_actions_are_unprocessable() {
    let server = TestServer::mock().await;
    let id = server.create_session().await;
    let resp = server.act(&id, json!({"type": "Dance"})).await;
    assert_eq!(resp.status(), 422);
    assert_eq!(
        resp.json::<Value>().await.unwrap()["error"]["code"],
        "MalformedRequest"
    );
    let resp = server
        .act(&id, json!({"type": "TypeContext", "text": "   "}))
        .await;
    assert_eq!(resp.status(), 422);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_session_is_not_found() {
    let server = TestServer::mock().await;
    let resp = server.get("/v1/sessions/nope/state").await;
    assert_eq!(resp.status(), 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn bearer_token_guards_everything_but_the_stage() {
    let config = ServiceConfig {
        auth_token: Some(TOKEN.into()),
        ..Default::default()
    };
    let server = TestServer::start(config).await;
    let id = server.create_session().await;

    let anonymous = server.client.clone();
    let resp = anonymous
        .get(server.url(&format!("/v1/sessions/{id}/state")))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 401);
    let resp = anonymous
        .get(server.url(&format!("/v1/sessions/{id}/state")))
        .bearer_auth("wrong")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 401);
    let resp = anonymous
        .get(server.url(&format!("/v1/sessions/{id}/stage")))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let resp = anonymous
        .get(server.url(&format!(
            "/v1/sessions/{id}/events?access_token={TOKEN}"
        )))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
}

#[tokio::test(flavor = "multi_thread")]
async fn config_overrides_apply_and_are_validated() {
    let server = TestServer::mock().await;
    let resp = server
        .post("/v1/sessions", &json!({"generation": {"runs_k": 5}}))
        .await;
    assert_eq!(resp.status(), 201);
    let id = resp.json::<Value>().await.unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    assert_eq!(server.state(&id).await["config"]["generation"]["runs_k"], 5);

    let resp = server
        .post("/v1/sessions", &json!({"generation": {"runs_k": 0}}))
        .await;
    assert_eq!(resp.status(), 422);
}

#[tokio::test(flavor = "multi_thread")]
async fn seed_query_returns_ranked_matches() {
    let server = TestServer::mock().await;
    let resp = server
        .post("/v1/seed/query", &json!({"suggestion": "Pizza Hut", "k": 5}))
        .await;
    assert_eq!(resp.status(), 200);
    let body: Value = resp.json().await.unwrap();
    let matches = body["matches"].as_array().unwrap();
    assert_eq!(matches.len(), 5);
    let sims: Vec<f64> = matches
        .iter()
        .map(|m| m["similarity"].as_f64().unwrap())
        .collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));

    let resp = server
        .post("/v1/seed/query", &json!({"suggestion": "x", "k": 0}))
        .await;
    assert_eq!(resp.status(), 422);
}

#[tokio::test(flavor = "multi_thread")]
async fn seeding_disabled_is_unavailable() {
    let mut config = ServiceConfig::default();
    config.seed.enabled = false;
    let server = TestServer::start(config).await;
    let resp = server
        .post("/v1/seed/query", &json!({"suggestion": "Pizza Hut", "k": 5}))
        .await;
    assert_eq!(resp.status(), 503);
}

#[tokio::test(flavor = "multi_thread")]
async fn event_stream_delivers_live_events_and_closes_after_end() {
    let server = TestServer::mock().await;
    let id = server.create_session().await;
    let mut stream = server.events(&id, None, None).await;
    let first = stream.next(WAIT).await.unwrap();
    assert_eq!(first.id, 1);

    server
        .act_ok(&id, json!({"type": "TypeContext", "text": "Snow fell."}))
        .await;
    server.act_ok(&id, json!({"type": "EndSession"})).await;
    let rest = stream.collect(WAIT).await;
    let ids: Vec<u64> = rest.iter().map(|e| e.id).collect();
    let last = server.state(&id).await["last_sequence"].as_u64().unwrap();
    assert_eq!(ids, (2..=last).collect::<Vec<_>>());
}

#[tokio::test(flavor = "multi_thread")]
async fn last_event_id_resumes_the_stream() {
    let server = TestServer::mock().await;
    let id = server.create_session().await;
    server
        .act_ok(&id, json!({"type": "TypeContext", "text": "One. Two. Three."}))
        .await;
    server.act_ok(&id, json!({"type": "EndSession"})).await;
    let all: Vec<u64> = server
        .events(&id, Some(0), None)
        .await
        .collect(WAIT)
        .await
        .iter()
        .map(|e| e.id)
        .collect();
    let resumed: Vec<u64> = server
        .events(&id, Some(0), Some(3))
        .await
        .collect(WAIT)
        .await
        .iter()
        .map(|e| e.id)
        .collect();
    assert_eq!(resumed, all[3..].to_vec());
}

#[tokio::test(flavor = "multi_thread")]
async fn transcripts_persist_and_sessions_restore() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        transcripts_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };

    let server = TestServer::start(config.clone()).await;
    let id = server.create_session().await;
    server
        .act_ok(&id, json!({"type": "TypeContext", "text": "The curtain rose."}))
        .await;
    server.act_ok(&id, json!({"type": "RequestGeneration"})).await;
    let set_id = first_selectable(&server.state(&id).await);
    server.act_ok(&id, publish(&set_id)).await;
    server.act_ok(&id, json!({"type": "RequestGeneration"})).await;
    let before = server.state(&id).await;

    let download = server.get(&format!("/v1/sessions/{id}/transcript")).await;
    assert_eq!(
        download.headers()["content-type"].to_str().unwrap(),
        "application/x-ndjson"
    );
    let download = download.text().await.unwrap();
    let on_disk = std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(download, on_disk);

    let restarted = TestServer::start(config).await;
    let after = restarted.state(&id).await;
    assert_eq!(after["restored"], true);
    assert_eq!(after["context"], before["context"]);
    assert_eq!(after["last_sequence"], before["last_sequence"]);
    assert!(after["pending_sets"].as_array().unwrap().is_empty());

    // Restored sessions keep going and keep appending.
    restarted
        .act_ok(&id, json!({"type": "TypeContext", "text": "Applause."}))
        .await;
    let on_disk = std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(
        on_disk.lines().count() as u64,
        restarted.state(&id).await["last_sequence"].as_u64().unwrap()
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn replayed_show_streams_every_event_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = fixture_dir();
    let transcript = std::fs::read_to_string(fixtures.join("transcript.jsonl")).unwrap();
    std::fs::write(dir.path().join("pizza-hut.jsonl"), &transcript).unwrap();
    let config = ServiceConfig {
        transcripts_dir: Some(dir.path().to_path_buf()),
        backend: BackendConfig::Replay {
            fixtures: fixtures.join("completions.jsonl"),
        },
        ..Default::default()
    };
    let server = TestServer::start(config).await;

    let state = server.state("pizza-hut").await;
    assert_eq!(state["restored"], false, "replay should verify the show");
    assert_eq!(state["state"], "Ended");

    let streamed = server
        .events("pizza-hut", Some(0), None)
        .await
        .collect(WAIT)
        .await;
    let expected: Vec<&str> = transcript.lines().collect();
    assert_eq!(streamed.len(), expected.len());
    for (i, (event, line)) in streamed.iter().zip(&expected).enumerate() {
        assert_eq!(event.id, i as u64 + 1);
        assert_eq!(event.data, *line);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn listing_shows_created_sessions() {
    let server = TestServer::mock().await;
    let a = server.create_session().await;
    let b = server.create_session().await;
    let body: Value = server.get("/v1/sessions").await.json().await.unwrap();
    let ids: Vec<&str> = body["sessions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["session_id"].as_str().unwrap())
        .collect();
    assert!(ids.contains(&a.as_str()) && ids.contains(&b.as_str()));
    let health = server.get("/healthz").await;
    assert_eq!(health.status(), 200);
}

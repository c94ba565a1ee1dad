#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use futures::StreamExt;
use narrator_server::app::AppState;
use narrator_server::config::ServiceConfig;
use serde_json::{json, Value};

pub const TOKEN: &str = "backstage";

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/pizza_hut")
}

pub struct TestServer {
    pub base: String,
    pub app: AppState,
    pub client: reqwest::Client,
    pub token: Option<String>,
}

impl TestServer {
    pub async fn start(config: ServiceConfig) -> Self {
        let token = config.resolve_auth_token().unwrap();
        let app = tokio::task::spawn_blocking(move || AppState::from_config(&config))
            .await
            .unwrap()
            .unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let router = app.router();
        tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
        Self {
            base,
            app,
            client: reqwest::Client::new(),
            token,
        }
    }

    pub async fn mock() -> Self {
        Self::start(ServiceConfig::default()).await
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn authed(&self, req: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.authed(self.client.get(self.url(path))).send().await.unwrap()
    }

    pub async fn post(&self, path: &str, body: &Value) -> reqwest::Response {
        self.authed(self.client.post(self.url(path)).json(body))
            .send()
            .await
            .unwrap()
    }

    pub async fn create_session(&self) -> String {
        let resp = self.post("/v1/sessions", &json!({})).await;
        assert_eq!(resp.status(), 201);
        resp.json::<Value>().await.unwrap()["session_id"]
            .as_str()
            .unwrap()
            .to_string()
    }

    pub async fn act(&self, id: &str, action: Value) -> reqwest::Response {
        self.post(&format!("/v1/sessions/{id}/actions"), &action).await
    }

    pub async fn act_ok(&self, id: &str, action: Value) -> Vec<Value> {
        let resp = self.act(id, action).await;
        let status = resp.status();
        let body: Value = resp.json().await.unwrap();
        assert_eq!(status, 200, "{body}");
        body["events"].as_array().unwrap().clone()
    }

    pub async fn state(&self, id: &str) -> Value {
        self.get(&format!("/v1/sessions/{id}/state")).await.json().await.unwrap()
    }

    /// Opens the event stream. `resume` goes in `?since=`, `last_event_id`
    /// in the header.
    pub async fn events(
        &self,
        id: &str,
        resume: Option<u64>,
        last_event_id: Option<u64>,
    ) -> SseReader {
        let mut url = self.url(&format!("/v1/sessions/{id}/events"));
        if let Some(since) = resume {
            url.push_str(&format!("?since={since}"));
        }
        let mut req = self.authed(self.client.get(url));
        if let Some(last) = last_event_id {
            req = req.header("Last-Event-ID", last.to_string());
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status(), 200);
        SseReader {
            stream: Box::pin(resp.bytes_stream()),
            buffer: String::new(),
        }
    }
}

pub struct SseEvent {
    pub id: u64,
    pub data: String,
}

pub struct SseReader {
    stream: std::pin::Pin<
        Box<dyn futures::Stream<Item = reqwest::Result<bytes::Bytes>> + Send>,
    >,
    buffer: String,
}

impl SseReader {
    /// Next data-bearing event, `None` when the stream ends or `wait` passes.
    pub async fn next(&mut self, wait: Duration) -> Option<SseEvent> {
        loop {
            if let Some(end) = self.buffer.find("\n\n") {
                let frame: String = self.buffer.drain(..end + 2).collect();
                let mut id = None;
                let mut data = None;
                for line in frame.lines() {
                    if let Some(v) = line.strip_prefix("id:") {
                        id = v.trim().parse().ok();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data = Some(v.strip_prefix(' ').unwrap_or(v).to_string());
                    }
                }
                match (id, data) {
                    (Some(id), Some(data)) => return Some(SseEvent { id, data }),
                    _ => continue,
                }
            }
            match tokio::time::timeout(wait, self.stream.next()).await {
                Ok(Some(Ok(chunk))) => self.buffer.push_str(&String::from_utf8_lossy(&chunk)),
                _ => return None,
            }
        }
    }

    pub async fn collect(&mut self, wait: Duration) -> Vec<SseEvent> {
        let mut out = Vec::new();
        while let Some(e) = self.next(wait).await {
            out.push(e);
        }
        out
    }
}

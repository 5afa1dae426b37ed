//! Scripted requests against the router, rendered as a transcript.
//!
//! Script lines:
//!
//! ```text
//! # comment
//! clock 1700000000
//! GET /students/ada/skills
//! POST /observations key=k1 {"student": "ada", ...}
//! POST /graph @demo
//! ```

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pdt_server::api::{ErrorBody, IDEMPOTENCY_KEY, REPLAYED};
use pdt_server::service::{GraphReply, NewStudent, RecommendationsReply, SkillsReply};
use pdt_server::{router, FixedClock, Service, DEMO_GRAPH};
use pdt_tracker::store::{FileStore, MemoryStore};
use pdt_tracker::{GraphParams, Posterior, Recorded, Store};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tower::ServiceExt;

pub const START: i64 = 1_700_000_000;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn golden_script() -> String {
    std::fs::read_to_string(golden_dir().join("script.txt")).expect("golden script")
}

pub struct Harness {
    pub service: Arc<Service>,
    pub clock: Arc<FixedClock>,
    pub app: Router,
}

impl Harness {
    pub fn with_store(store: Box<dyn Store>) -> Self {
        let clock = Arc::new(FixedClock::new(START));
        let service = Arc::new(Service::new(store, GraphParams::default(), DEMO_GRAPH, clock.clone(), 1024).unwrap());
        let app = router(service.clone());
        Self { service, clock, app }
    }

    pub fn memory() -> Self {
        Self::with_store(Box::new(MemoryStore::new()))
    }

    pub fn files(dir: &Path) -> Self {
        Self::with_store(Box::new(FileStore::open(dir, false).unwrap()))
    }

    pub async fn send(&self, method: &str, path: &str, key: Option<&str>, body: &str) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(k) = key {
            req = req.header(IDEMPOTENCY_KEY, k);
        }
        let res = self.app.clone().oneshot(req.body(Body::from(body.to_owned())).unwrap()).await.unwrap();
        let status = res.status();
        let replayed = res.headers().contains_key(REPLAYED);
        let content_type =
            res.headers().get("content-type").map(|v| v.to_str().unwrap().to_owned()).unwrap_or_default();
        let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, content_type, replayed, body: String::from_utf8(body).unwrap() }
    }

    pub async fn get(&self, path: &str) -> Reply {
        self.send("GET", path, None, "").await
    }

    pub async fn post(&self, path: &str, body: &str) -> Reply {
        self.send("POST", path, None, body).await
    }

    /// Runs a script and returns the transcript.
    pub async fn run(&self, script: &str) -> String {
        let mut out = String::new();
        for line in script.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Some(t) = line.strip_prefix("clock ") {
                self.clock.set(t.trim().parse().expect("clock value"));
                out.push_str(&format!("@ {}\n\n", t.trim()));
                continue;
            }
            let (method, rest) = line.split_once(' ').expect("method and path");
            let (path, rest) = rest.split_once(' ').unwrap_or((rest, ""));
            let (key, body) = match rest.strip_prefix("key=") {
                Some(r) => {
                    let (k, b) = r.split_once(' ').unwrap_or((r, ""));
                    (Some(k), b)
                }
                None => (None, rest),
            };
            let body = if body == "@demo" { DEMO_GRAPH } else { body };
            let reply = self.send(method, path, key, body).await;
            check_schema(method, path, &reply);
            out.push_str(&format!("> {method} {path}{}\n", key.map(|k| format!(" key={k}")).unwrap_or_default()));
            if !body.is_empty() && body != DEMO_GRAPH {
                out.push_str(&format!("> {body}\n"));
            }
            out.push_str(&format!(
                "< {} {}{}\n< {}\n\n",
                reply.status.as_u16(),
                reply.content_type,
                if reply.replayed { " replayed" } else { "" },
                reply.body.trim_end()
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub replayed: bool,
    pub body: String,
}

impl Reply {
    pub fn json<T: DeserializeOwned>(&self) -> T {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

/// The body parses as `T` and serializes back to the same bytes.
pub fn round_trips<T: DeserializeOwned + Serialize>(body: &str) {
    let v: T = serde_json::from_str(body).unwrap_or_else(|e| panic!("{e}: {body}"));
    assert_eq!(serde_json::to_string(&v).unwrap(), body, "schema round trip");
}

fn check_schema(method: &str, path: &str, reply: &Reply) {
    if reply.content_type != "application/json" {
        assert!(path == "/graph" && method == "GET", "{path}: {}", reply.content_type);
        return;
    }
    if !reply.status.is_success() {
        round_trips::<ErrorBody>(&reply.body);
        return;
    }
    let route = path.split('?').next().unwrap();
    let parts: Vec<&str> = route.trim_matches('/').split('/').collect();
    match (method, parts.as_slice()) {
        ("POST", ["graph"]) => round_trips::<GraphReply>(&reply.body),
        ("POST", ["students"]) => round_trips::<NewStudent>(&reply.body),
        ("POST", ["observations"]) => round_trips::<Recorded>(&reply.body),
        ("GET", ["students", _, "skills"]) => round_trips::<SkillsReply>(&reply.body),
        ("GET", ["students", _, "skills", _]) => round_trips::<Posterior>(&reply.body),
        ("GET", ["students", _, "recommendations"]) => round_trips::<RecommendationsReply>(&reply.body),
        ("GET", ["students"]) | ("GET", ["healthz"]) => {
            serde_json::from_str::<serde_json::Value>(&reply.body).unwrap();
        }
        other => panic!("no schema for {other:?}"),
    }
}

//! Request handling independent of the HTTP framework.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use pdt_core::{Outcome, SkillId};
use pdt_tracker::engine::INTERVAL_MASS;
use pdt_tracker::store::FileStore;
use pdt_tracker::{
    ExerciseId, GraphDef, GraphParams, Posterior, Recommendation, Recorded, Result, SkillGraph, Store, StudentId,
    Timestamp, Tracker, TrackerError, ValidationReport,
};
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub const DEMO_GRAPH: &str = include_str!("../demo/graph.def");

pub trait Clock: Send + Sync {
    /// Seconds since the Unix epoch.
    fn now(&self) -> Timestamp;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as Timestamp).unwrap_or(0)
    }
}

/// Settable clock for tests and scripted replays.
#[derive(Debug, Default)]
pub struct FixedClock(AtomicI64);

impl FixedClock {
    pub fn new(at: Timestamp) -> Self {
        Self(AtomicI64::new(at))
    }

    pub fn set(&self, at: Timestamp) {
        self.0.store(at, Ordering::SeqCst);
    }
}

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

/// Parses a definition; one without a `[params]` table takes `defaults`.
pub fn load_graph(text: &str, defaults: &GraphParams) -> Result<(SkillGraph, ValidationReport)> {
    let mut def = GraphDef::from_toml(text)?;
    let table: toml::Table = toml::from_str(text).map_err(|e| TrackerError::GraphSyntax(e.to_string()))?;
    if !table.contains_key("params") {
        def.params = defaults.clone();
    }
    SkillGraph::new(def)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewStudent {
    pub id: StudentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRequest {
    pub student: StudentId,
    pub exercise: ExerciseId,
    pub outcome: Outcome,
    #[serde(default)]
    pub at: Option<Timestamp>,
    /// Report the update without storing it.
    #[serde(default)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSummary {
    pub skill: SkillId,
    pub mean: f64,
    pub interval: [f64; 2],
    pub order: usize,
    pub practice_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillsReply {
    pub student: StudentId,
    pub at: Timestamp,
    pub interval_mass: f64,
    pub skills: Vec<SkillSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationsReply {
    pub student: StudentId,
    pub at: Timestamp,
    pub lo: f64,
    pub hi: f64,
    pub exercises: Vec<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphReply {
    pub report: ValidationReport,
    pub skills: usize,
    pub exercises: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

/// A finished response, kept so a repeated request key gets it again.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cached {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyLookup {
    Hit(Cached),
    /// The key was used for a different request.
    Conflict,
    Miss,
}

#[derive(Default)]
struct KeyCache {
    entries: HashMap<String, (Vec<u8>, Cached)>,
    order: VecDeque<String>,
}

pub struct Service {
    tracker: Tracker<Box<dyn Store>>,
    clock: Arc<dyn Clock>,
    defaults: GraphParams,
    capacity: usize,
    keys: Mutex<KeyCache>,
}

impl Service {
    /// Opens over `store`, recovering its log. The stored graph wins;
    /// `fallback` is installed when there is none.
    pub fn new(
        store: Box<dyn Store>,
        defaults: GraphParams,
        fallback: &str,
        clock: Arc<dyn Clock>,
        capacity: usize,
    ) -> Result<Self> {
        let (graph, install) = match store.graph()? {
            Some(text) => (load_graph(&text, &defaults)?.0, false),
            None => (load_graph(fallback, &defaults)?.0, true),
        };
        let tracker = Tracker::open(store, graph)?;
        if install {
            tracker.set_graph(SkillGraph::clone(&tracker.graph()))?;
        }
        Ok(Self { tracker, clock, defaults, capacity, keys: Mutex::new(KeyCache::default()) })
    }

    /// File store, graph and parameters as configured.
    pub fn from_config(cfg: &Config, clock: Arc<dyn Clock>) -> Result<Self> {
        let store = FileStore::open(&cfg.store.dir, cfg.store.fsync)?;
        let fallback = match &cfg.store.graph {
            Some(path) => std::fs::read_to_string(path)?,
            None => DEMO_GRAPH.to_owned(),
        };
        Self::new(Box::new(store), cfg.params.clone(), &fallback, clock, cfg.idempotency_capacity)
    }

    pub fn tracker(&self) -> &Tracker<Box<dyn Store>> {
        &self.tracker
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn graph_text(&self) -> String {
        self.tracker.graph().definition().to_toml()
    }

    /// Validates and, when valid, replaces the graph. Existing states are
    /// kept; skills that disappear are no longer served.
    pub fn put_graph(&self, text: &str) -> Result<GraphReply> {
        let (graph, report) = load_graph(text, &self.defaults)?;
        let reply = GraphReply { report, skills: graph.skills().count(), exercises: graph.exercises().count() };
        self.tracker.set_graph(graph)?;
        Ok(reply)
    }

    pub fn create_student(&self, req: &NewStudent) -> Result<NewStudent> {
        self.tracker.create_student(req.id.clone())?;
        Ok(req.clone())
    }

    pub fn observe(&self, req: &ObservationRequest) -> Result<Recorded> {
        let obs = pdt_tracker::Observation {
            student: req.student.clone(),
            exercise: req.exercise.clone(),
            outcome: req.outcome,
            at: req.at.unwrap_or_else(|| self.now()),
        };
        if req.dry_run {
            self.tracker.dry_run(&obs)
        } else {
            self.tracker.record(&obs)
        }
    }

    pub fn posterior(&self, student: &StudentId, skill: &SkillId, at: Option<Timestamp>) -> Result<Posterior> {
        self.tracker.posterior(student, skill, at.unwrap_or_else(|| self.now()))
    }

    pub fn skills(&self, student: &StudentId, at: Option<Timestamp>) -> Result<SkillsReply> {
        let at = at.unwrap_or_else(|| self.now());
        let record = self.tracker.record_of(student)?;
        let skills = self
            .tracker
            .posteriors(student, at)?
            .into_iter()
            .map(|p| SkillSummary {
                practice_count: record.states.get(&p.skill).map_or(0, |s| s.practice_count),
                order: p.coefficients.order(),
                skill: p.skill,
                mean: p.mean,
                interval: p.interval,
            })
            .collect();
        Ok(SkillsReply { student: student.clone(), at, interval_mass: INTERVAL_MASS, skills })
    }

    pub fn recommend(&self, student: &StudentId, at: Option<Timestamp>, lo: f64, hi: f64) -> Result<RecommendationsReply> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(pdt_core::Error::InvalidArgument(format!("window [{lo}, {hi}] is not inside [0, 1]")).into());
        }
        let at = at.unwrap_or_else(|| self.now());
        let exercises = self.tracker.recommend(student, at, lo, hi)?;
        Ok(RecommendationsReply { student: student.clone(), at, lo, hi, exercises })
    }

    /// Runs `f` once per request key. A repeat of the same request gets
    /// the first response; the same key on a different request is a
    /// conflict. Server errors are not remembered.
    pub fn idempotent(&self, key: Option<&str>, request: &[u8], f: impl FnOnce() -> Cached) -> (Cached, bool) {
        let Some(key) = key else { return (f(), false) };
        let mut cache = self.keys.lock().expect("key cache lock");
        match lookup(&cache, key, request) {
            KeyLookup::Hit(c) => return (c, true),
            KeyLookup::Conflict => return (conflict(key), false),
            KeyLookup::Miss => {}
        }
        let reply = f();
        if reply.status < 500 && self.capacity > 0 {
            while cache.entries.len() >= self.capacity {
                let Some(old) = cache.order.pop_front() else { break };
                cache.entries.remove(&old);
            }
            cache.order.push_back(key.to_owned());
            cache.entries.insert(key.to_owned(), (request.to_vec(), reply.clone()));
        }
        (reply, false)
    }
}

fn lookup(cache: &KeyCache, key: &str, request: &[u8]) -> KeyLookup {
    match cache.entries.get(key) {
        Some((req, reply)) if req == request => KeyLookup::Hit(reply.clone()),
        Some(_) => KeyLookup::Conflict,
        None => KeyLookup::Miss,
    }
}

fn conflict(key: &str) -> Cached {
    let body = ErrorBody {
        code: "idempotency_key_reused".into(),
        message: "request key was already used for a different request".into(),
        detail: serde_json::json!({ "key": key }),
    };
    Cached { status: 422, content_type: "application/json", body: serde_json::to_vec(&body).expect("json") }
}

#[cfg(test)]
mod tests {
    use pdt_tracker::store::MemoryStore;

    use super::*;

    fn service(capacity: usize) -> Service {
        let clock = Arc::new(FixedClock::new(1_000));
        Service::new(Box::new(MemoryStore::new()), GraphParams::default(), DEMO_GRAPH, clock, capacity).unwrap()
    }

    fn reply(n: u8) -> Cached {
        Cached { status: 200, content_type: "text/plain", body: vec![n] }
    }

    #[test]
    fn demo_graph_is_valid_and_installed() {
        let (graph, report) = load_graph(DEMO_GRAPH, &GraphParams::default()).unwrap();
        assert!(report.valid && report.issues.is_empty(), "{:?}", report.issues);
        assert_eq!(graph.skills().count(), 6);
        let s = service(4);
        assert_eq!(s.tracker().store().graph().unwrap().unwrap(), s.graph_text());
    }

    #[test]
    fn missing_params_take_defaults() {
        let defaults = GraphParams { n_i: 7, ..Default::default() };
        let (g, _) = load_graph("[[skills]]\nid = \"a\"\n", &defaults).unwrap();
        assert_eq!(g.params.n_i, 7);
        let (g, _) = load_graph("[params]\n[[skills]]\nid = \"a\"\n", &defaults).unwrap();
        assert_eq!(g.params.n_i, 10);
    }

    #[test]
    fn keys_replay_conflict_and_expire() {
        let s = service(2);
        assert_eq!(s.idempotent(Some("k1"), b"a", || reply(1)), (reply(1), false));
        assert_eq!(s.idempotent(Some("k1"), b"a", || reply(2)), (reply(1), true));
        assert_eq!(s.idempotent(Some("k1"), b"b", || reply(3)).0.status, 422);
        s.idempotent(Some("k2"), b"a", || reply(4));
        s.idempotent(Some("k3"), b"a", || reply(5));
        assert_eq!(s.idempotent(Some("k1"), b"a", || reply(6)), (reply(6), false));
        assert_eq!(s.idempotent(None, b"a", || reply(7)), (reply(7), false));
    }

    #[test]
    fn server_errors_are_not_remembered() {
        let s = service(4);
        let fail = Cached { status: 500, content_type: "text/plain", body: vec![] };
        s.idempotent(Some("k"), b"a", || fail);
        assert_eq!(s.idempotent(Some("k"), b"a", || reply(1)), (reply(1), false));
    }

    #[test]
    fn window_is_checked() {
        let s = service(0);
        s.create_student(&NewStudent { id: "s".into() }).unwrap();
        assert!(s.recommend(&"s".into(), None, 0.8, 0.4).is_err());
        assert!(s.recommend(&"s".into(), None, -0.1, 0.4).is_err());
        assert!(s.recommend(&"s".into(), None, 0.4, 0.8).is_ok());
    }
}

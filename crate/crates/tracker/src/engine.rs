//! Posterior assembly and observation recording.
//!
//! Stored states hold coefficients after the latest update and before any
//! smoothing. Reads decay them to the query time; a skill's posterior then
//! merges its own data with evidence inferred from its subskills and
//! evidence from correlated skills. Only one level is looked up: subskills
//! and correlated skills contribute their own data only.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use pdt_core::observe::{check_likelihood, marginal_h};
use pdt_core::{
    apply_decay, combine_group, correlate, expected_success, infer_gauss, merge_all, update_general, Coefficients,
    InferenceConfig, SkillId,
};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrackerError};
use crate::graph::SkillGraph;
use crate::model::{ExerciseId, LoggedObservation, Observation, SkillState, StudentId, StudentRecord, Timestamp};
use crate::store::Store;

/// Mass of the reported equal-tailed credible interval.
pub const INTERVAL_MASS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvidenceSource {
    /// The skill's own stored data, decayed to the query time.
    Own { practice_count: u64, last_practiced: Option<Timestamp> },
    /// Inferred from subskills through the skill's set-up.
    Composite { setup: String, n_i: usize },
    /// Correlated skills sharing one joint prior of order `n_c`.
    Correlated { n_c: usize, skills: Vec<SkillId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub source: EvidenceSource,
    /// Mean before merging.
    pub mean: f64,
    pub order: usize,
    #[serde(rename = "coefficients")]
    pub dist: Coefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub skill: SkillId,
    pub at: Timestamp,
    pub mean: f64,
    pub interval: [f64; 2],
    pub coefficients: Coefficients,
    pub trace: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillUpdate {
    pub skill: SkillId,
    /// Own-data mean at the observation time, before the update.
    pub prior_mean: f64,
    /// Mean of the newly stored state.
    pub stored_mean: f64,
    pub stored_order: usize,
    pub practice_count: u64,
    pub posterior: Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recorded {
    /// Log position; absent for dry runs.
    pub seq: Option<u64>,
    pub updates: Vec<SkillUpdate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub exercise: ExerciseId,
    pub expected_success: f64,
}

/// Own data of `skill` decayed to `at`; the flat prior when absent.
pub fn own_state(graph: &SkillGraph, record: &StudentRecord, skill: &SkillId, at: Timestamp) -> Result<Coefficients> {
    Ok(match record.states.get(skill) {
        None => Coefficients::flat(),
        Some(s) => apply_decay(&s.dist, at - s.last_practiced, s.practice_count, &graph.params.decay)?,
    })
}

fn own_states<'a>(
    graph: &SkillGraph,
    record: &StudentRecord,
    skills: impl IntoIterator<Item = &'a SkillId>,
    at: Timestamp,
) -> Result<BTreeMap<SkillId, Coefficients>> {
    skills.into_iter().map(|s| Ok((s.clone(), own_state(graph, record, s, at)?))).collect()
}

/// Every evidence source for `skill` at `at`, unmerged, in a fixed order:
/// own data, composite inference, correlated groups by ascending `n_c`.
pub fn evidence(graph: &SkillGraph, record: &StudentRecord, skill: &SkillId, at: Timestamp) -> Result<Vec<Evidence>> {
    let def = graph.skill(skill)?;
    let mut out = Vec::new();
    let mut push = |source, dist: Coefficients| {
        out.push(Evidence { source, mean: dist.mean(), order: dist.order(), dist });
    };
    let stored = record.states.get(skill);
    push(
        EvidenceSource::Own {
            practice_count: stored.map_or(0, |s| s.practice_count),
            last_practiced: stored.map(|s| s.last_practiced),
        },
        own_state(graph, record, skill, at)?,
    );
    if let Some(c) = &def.composite {
        let dists = own_states(graph, record, c.poly.vars(), at)?;
        let inferred = infer_gauss(&c.poly, &dists, &InferenceConfig { n_i: c.n_i })?;
        push(EvidenceSource::Composite { setup: c.setup.to_string(), n_i: c.n_i }, inferred);
    }
    let mut groups: BTreeMap<usize, Vec<SkillId>> = BTreeMap::new();
    for (other, n_c) in &def.correlations {
        groups.entry(*n_c).or_default().push(other.clone());
    }
    for (n_c, skills) in groups {
        let smoothed = skills
            .iter()
            .map(|s| correlate(&own_state(graph, record, s, at)?, n_c).map_err(TrackerError::from))
            .collect::<Result<Vec<_>>>()?;
        push(EvidenceSource::Correlated { n_c, skills }, combine_group(&smoothed)?);
    }
    Ok(out)
}

pub fn posterior(graph: &SkillGraph, record: &StudentRecord, skill: &SkillId, at: Timestamp) -> Result<Posterior> {
    let trace = evidence(graph, record, skill, at)?;
    let dist = merge_all(trace.iter().map(|e| &e.dist))?;
    let (lo, hi) = dist.credible_interval(INTERVAL_MASS);
    Ok(Posterior { skill: skill.clone(), at, mean: dist.mean(), interval: [lo, hi], coefficients: dist, trace })
}

/// States the observation produces, computed against a snapshot of every
/// involved skill decayed to the observation time. Nothing is written.
pub fn apply_observation(graph: &SkillGraph, record: &StudentRecord, obs: &Observation) -> Result<Vec<SkillState>> {
    let exercise = graph.exercise(&obs.exercise)?;
    let snapshot = own_states(graph, record, exercise.skills(), obs.at)?;
    exercise
        .skills()
        .iter()
        .map(|skill| {
            let h = marginal_h(&exercise.poly, skill, obs.outcome, &snapshot)?;
            check_likelihood(&h)?;
            let dist = update_general(&snapshot[skill], &h)?;
            let count = record.states.get(skill).map_or(0, |s| s.practice_count);
            Ok(SkillState { skill: skill.clone(), practice_count: count + 1, last_practiced: obs.at, dist })
        })
        .collect()
}

/// Folds logged observations, in order, into fresh student records.
pub fn rebuild(graph: &SkillGraph, entries: &[LoggedObservation]) -> Result<BTreeMap<StudentId, StudentRecord>> {
    let mut records: BTreeMap<StudentId, StudentRecord> = BTreeMap::new();
    for entry in entries {
        let record = records.entry(entry.obs.student.clone()).or_default();
        check_order(record, &entry.obs)?;
        let states = apply_observation(graph, record, &entry.obs)?;
        commit(record, states, entry.seq, entry.obs.at);
    }
    Ok(records)
}

fn check_order(record: &StudentRecord, obs: &Observation) -> Result<()> {
    match record.last_at {
        Some(last) if obs.at < last => {
            Err(TrackerError::TimestampRegression { student: obs.student.clone(), last, got: obs.at })
        }
        _ => Ok(()),
    }
}

fn commit(record: &mut StudentRecord, states: Vec<SkillState>, seq: u64, at: Timestamp) {
    for s in states {
        record.states.insert(s.skill.clone(), s);
    }
    record.last_seq = seq;
    record.last_at = Some(at);
}

/// Expected success of an exercise: `E[x]` over the per-skill posteriors.
pub fn expected_exercise_success(
    graph: &SkillGraph,
    record: &StudentRecord,
    exercise: &ExerciseId,
    at: Timestamp,
) -> Result<f64> {
    let ex = graph.exercise(exercise)?;
    let dists = posteriors_of(graph, record, ex.skills(), at)?;
    Ok(expected_success(&ex.poly, &dists)?)
}

/// Mean of the exercise's inferred success-rate distribution, the
/// forecast for its next outcome.
pub fn predict(graph: &SkillGraph, record: &StudentRecord, exercise: &ExerciseId, at: Timestamp) -> Result<f64> {
    let ex = graph.exercise(exercise)?;
    let dists = posteriors_of(graph, record, ex.skills(), at)?;
    Ok(infer_gauss(&ex.poly, &dists, &InferenceConfig { n_i: graph.params.n_i })?.mean())
}

fn posteriors_of(
    graph: &SkillGraph,
    record: &StudentRecord,
    skills: &[SkillId],
    at: Timestamp,
) -> Result<BTreeMap<SkillId, Coefficients>> {
    skills
        .iter()
        .map(|s| Ok((s.clone(), posterior(graph, record, s, at)?.coefficients)))
        .collect()
}

/// Exercises ranked by distance of their expected success from the middle
/// of `[lo, hi]`, ties (to 1e-12) by id.
pub fn recommend(
    graph: &SkillGraph,
    record: &StudentRecord,
    at: Timestamp,
    lo: f64,
    hi: f64,
) -> Result<Vec<Recommendation>> {
    let mid = 0.5 * (lo + hi);
    let mut out = graph
        .exercises()
        .map(|e| {
            Ok(Recommendation { exercise: e.id.clone(), expected_success: expected_exercise_success(graph, record, &e.id, at)? })
        })
        .collect::<Result<Vec<_>>>()?;
    // distances equal up to rounding count as ties
    let key = |r: &Recommendation| ((r.expected_success - mid).abs() * 1e12).round() as i64;
    out.sort_by(|a, b| key(a).cmp(&key(b)).then_with(|| a.exercise.cmp(&b.exercise)));
    Ok(out)
}

type Shared = Arc<Mutex<StudentRecord>>;

/// Thread-safe front end over a [`Store`]. Writes for one student are
/// serialized; other students proceed concurrently.
pub struct Tracker<S> {
    store: S,
    graph: RwLock<Arc<SkillGraph>>,
    students: RwLock<HashMap<StudentId, Shared>>,
}

impl<S: Store> Tracker<S> {
    /// Loads every student and replays logged observations newer than
    /// their committed state.
    pub fn open(store: S, graph: SkillGraph) -> Result<Self> {
        let mut records: BTreeMap<StudentId, StudentRecord> = BTreeMap::new();
        for id in store.students()? {
            let record = store.load(&id)?.unwrap_or_default();
            records.insert(id, record);
        }
        let committed = records.values().map(|r| r.last_seq).min().unwrap_or(0);
        let mut dirty = BTreeMap::new();
        for entry in store.replay(committed + 1)? {
            let record = records.entry(entry.obs.student.clone()).or_default();
            if entry.seq <= record.last_seq {
                continue;
            }
            let states = apply_observation(&graph, record, &entry.obs)?;
            commit(record, states, entry.seq, entry.obs.at);
            dirty.insert(entry.obs.student.clone(), ());
        }
        for id in dirty.keys() {
            store.put(id, &records[id])?;
        }
        let students = records.into_iter().map(|(id, r)| (id, Arc::new(Mutex::new(r)))).collect();
        Ok(Self { store, graph: RwLock::new(Arc::new(graph)), students: RwLock::new(students) })
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn graph(&self) -> Arc<SkillGraph> {
        self.graph.read().expect("graph lock").clone()
    }

    /// Replaces the graph and persists its definition.
    pub fn set_graph(&self, graph: SkillGraph) -> Result<()> {
        self.store.put_graph(&graph.definition().to_toml())?;
        *self.graph.write().expect("graph lock") = Arc::new(graph);
        Ok(())
    }

    pub fn create_student(&self, id: StudentId) -> Result<()> {
        id.validate()?;
        let mut students = self.students.write().expect("students lock");
        if students.contains_key(&id) {
            return Err(TrackerError::StudentExists(id));
        }
        let record = StudentRecord::default();
        self.store.put(&id, &record)?;
        students.insert(id, Arc::new(Mutex::new(record)));
        Ok(())
    }

    pub fn students(&self) -> Vec<StudentId> {
        let mut ids: Vec<_> = self.students.read().expect("students lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn shared(&self, id: &StudentId) -> Result<Shared> {
        self.students
            .read()
            .expect("students lock")
            .get(id)
            .cloned()
            .ok_or_else(|| TrackerError::UnknownStudent(id.clone()))
    }

    /// Copy of the student's committed record.
    pub fn record_of(&self, id: &StudentId) -> Result<StudentRecord> {
        Ok(self.shared(id)?.lock().expect("student lock").clone())
    }

    /// Logs the observation, then commits the updated states.
    pub fn record(&self, obs: &Observation) -> Result<Recorded> {
        let shared = self.shared(&obs.student)?;
        let mut record = shared.lock().expect("student lock");
        check_order(&record, obs)?;
        let graph = self.graph();
        let before = record.clone();
        let states = apply_observation(&graph, &record, obs)?;
        let seq = self.store.append(obs)?;
        let mut next = record.clone();
        commit(&mut next, states, seq, obs.at);
        self.store.put(&obs.student, &next)?;
        *record = next;
        Ok(Recorded { seq: Some(seq), updates: report(&graph, &before, &record, obs)? })
    }

    /// What [`Self::record`] would return, without logging or storing.
    pub fn dry_run(&self, obs: &Observation) -> Result<Recorded> {
        let before = self.record_of(&obs.student)?;
        check_order(&before, obs)?;
        let graph = self.graph();
        let states = apply_observation(&graph, &before, obs)?;
        let mut after = before.clone();
        commit(&mut after, states, before.last_seq, obs.at);
        Ok(Recorded { seq: None, updates: report(&graph, &before, &after, obs)? })
    }

    pub fn posterior(&self, student: &StudentId, skill: &SkillId, at: Timestamp) -> Result<Posterior> {
        let record = self.record_of(student)?;
        posterior(&self.graph(), &record, skill, at)
    }

    /// Posteriors of every skill in the graph, by id.
    pub fn posteriors(&self, student: &StudentId, at: Timestamp) -> Result<Vec<Posterior>> {
        let record = self.record_of(student)?;
        let graph = self.graph();
        graph.skills().map(|s| posterior(&graph, &record, &s.id, at)).collect()
    }

    pub fn recommend(&self, student: &StudentId, at: Timestamp, lo: f64, hi: f64) -> Result<Vec<Recommendation>> {
        let record = self.record_of(student)?;
        recommend(&self.graph(), &record, at, lo, hi)
    }
}

fn report(graph: &SkillGraph, before: &StudentRecord, after: &StudentRecord, obs: &Observation) -> Result<Vec<SkillUpdate>> {
    let exercise = graph.exercise(&obs.exercise)?;
    exercise
        .skills()
        .iter()
        .map(|skill| {
            let stored = &after.states[skill];
            Ok(SkillUpdate {
                skill: skill.clone(),
                prior_mean: own_state(graph, before, skill, obs.at)?.mean(),
                stored_mean: stored.dist.mean(),
                stored_order: stored.dist.order(),
                practice_count: stored.practice_count,
                posterior: posterior(graph, after, skill, obs.at)?,
            })
        })
        .collect()
}

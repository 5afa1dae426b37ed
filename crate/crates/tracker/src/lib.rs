//! Per-student skill tracking on top of `pdt-core`: skill graphs, stored
//! states with an observation log, posterior assembly and a calibration
//! simulator.

pub mod engine;
pub mod error;
pub mod graph;
pub mod model;
pub mod simulator;
pub mod store;

pub use engine::{Evidence, EvidenceSource, Posterior, Recommendation, Recorded, SkillUpdate, Tracker};
pub use error::{Result, TrackerError};
pub use graph::{GraphDef, GraphParams, Issue, IssueCode, Severity, SkillGraph, ValidationReport};
pub use model::{ExerciseId, LoggedObservation, Observation, SkillState, StudentId, StudentRecord, Timestamp};
pub use simulator::{CalibrationReport, SimConfig};
pub use store::{FileStore, MemoryStore, Store};

//! Identifiers and the records the tracker persists.

use std::collections::BTreeMap;
use std::fmt;

use pdt_core::{Coefficients, Outcome, SkillId};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrackerError};

/// Unix time in whole seconds.
pub type Timestamp = i64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(
    /// Student identifier; also a file name in the state directory, so it
    /// is restricted to `[A-Za-z0-9_.-]`.
    StudentId
);
string_id!(ExerciseId);

impl StudentId {
    pub fn validate(&self) -> Result<()> {
        let s = self.as_str();
        let ok = !s.is_empty()
            && s.len() <= 128
            && !s.starts_with('.')
            && s.bytes().all(|b| b.is_ascii_alphanumeric() || b"_.-".contains(&b));
        if ok {
            Ok(())
        } else {
            Err(TrackerError::InvalidId(s.to_owned()))
        }
    }
}

/// One exercise outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub student: StudentId,
    pub exercise: ExerciseId,
    pub outcome: Outcome,
    pub at: Timestamp,
}

/// An observation with its position in the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedObservation {
    pub seq: u64,
    #[serde(flatten)]
    pub obs: Observation,
}

/// Stored state of one skill: coefficients after the latest update and
/// before any smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillState {
    pub skill: SkillId,
    pub practice_count: u64,
    pub last_practiced: Timestamp,
    pub dist: Coefficients,
}

/// Everything stored for one student.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudentRecord {
    /// Sequence number of the last observation folded into `states`.
    pub last_seq: u64,
    /// Time of the latest observation; later ones may not precede it.
    pub last_at: Option<Timestamp>,
    pub states: BTreeMap<SkillId, SkillState>,
}

use std::path::PathBuf;

use pdt_core::SkillId;
use thiserror::Error;

use crate::graph::ValidationReport;
use crate::model::{ExerciseId, StudentId, Timestamp};

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("unknown student {0}")]
    UnknownStudent(StudentId),
    #[error("unknown skill {0}")]
    UnknownSkill(SkillId),
    #[error("unknown exercise {0}")]
    UnknownExercise(ExerciseId),
    #[error("student {0} already exists")]
    StudentExists(StudentId),
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("observation at {got} precedes the latest one for {student} at {last}")]
    TimestampRegression { student: StudentId, last: Timestamp, got: Timestamp },
    #[error("skill graph is invalid ({} errors)", .0.errors().count())]
    InvalidGraph(ValidationReport),
    #[error("graph definition: {0}")]
    GraphSyntax(String),
    #[error("corrupt record in {} at byte {offset}: {reason}", path.display())]
    CorruptRecord { path: PathBuf, offset: u64, reason: String },
    #[error(transparent)]
    Core(#[from] pdt_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TrackerError> = std::result::Result<T, E>;

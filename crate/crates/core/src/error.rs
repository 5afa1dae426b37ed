use thiserror::Error;

use crate::setup_dsl::SkillId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Every coefficient vanished after clamping; the update contradicts
    /// the distribution it was applied to.
    #[error("all coefficients are zero after clamping negatives")]
    AllZero,
    #[error("order {order} exceeds the maximum supported order {max}")]
    OrderOverflow { order: usize, max: usize },
    #[error("coefficient orders differ: expected {expected}, found {found}")]
    OrderMismatch { expected: usize, found: usize },
    #[error("coefficient vector has length {len}, which does not match order {order}")]
    LengthMismatch { order: usize, len: usize },
    #[error("no distribution supplied for skill `{0}`")]
    MissingSkillDistribution(SkillId),
    #[error("no value supplied for variable `{0}`")]
    MissingVariable(SkillId),
    #[error("likelihood polynomial is negative ({value:e}) at a = {at}")]
    NegativeLikelihood { value: f64, at: f64 },
    #[error("correlation group is empty")]
    EmptyGroup,
    #[error("quadrature did not converge: change {delta:e} exceeds tolerance {tolerance:e}")]
    NonConvergence { delta: f64, tolerance: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

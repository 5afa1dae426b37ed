//! Success-rate distributions for skill tracing.
//!
//! A student's success rate on a skill is tracked as a mixture of beta
//! densities of fixed order. Exercise outcomes update the mixture
//! exactly, elapsed time smooths it back toward the flat prior, and
//! composite skills and exercises get their distributions by inference
//! over the skills in their set-up.
//!
//! Coefficient code is generic over [`Scalar`]; the aliases below fix the
//! common choices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beta_basis;
pub mod error;
pub mod fusion;
pub mod gauss;
pub mod inference;
pub mod observe;
pub mod oracle;
pub mod scalar;
pub mod setup_dsl;
pub mod smoothing;

pub use beta_basis::{BasisCoefficients, CdfCoefficients, MAX_ORDER};
pub use error::{Error, Result};
pub use fusion::{combine_group, correlate, merge, merge_all};
pub use inference::{expected_success, infer, infer_gauss, InferenceConfig};
pub use observe::{update_binary, update_general, update_skill, HPolynomial, Outcome};
pub use scalar::Scalar;
pub use setup_dsl::{parse, ParseError, ProbPolynomial, SetupExpr, SkillId};
pub use smoothing::{apply_decay, compress, decay_ratio, decompose, smooth, DecayParams, DecayPlan};

pub use num_rational::BigRational;

/// Working-precision coefficients; what the engine stores.
pub type Coefficients = BasisCoefficients<f64>;
/// Single-precision coefficients, adequate to roughly order 120.
pub type Coefficients32 = BasisCoefficients<f32>;
/// Exact rational coefficients.
pub type ExactCoefficients = BasisCoefficients<BigRational>;
pub type Polynomial = ProbPolynomial<f64>;
pub type ExactPolynomial = ProbPolynomial<BigRational>;
pub type Likelihood = HPolynomial<f64>;

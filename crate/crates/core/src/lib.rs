//! Topological equivalence between a nonautonomous linear difference system
//! `x(k+1) = A(k)x(k)` and its perturbation `y(k+1) = A(k)y(k) + f(k, y(k))`.
//!
//! * [`system`]: coefficient sequences, perturbations, transition matrices,
//!   the Green operator and trajectories.
//! * [`certificates`]: dichotomy data, finite-horizon condition checks and
//!   scenario presets.
//! * [`engine`]: the maps `H`, `G`, their derivatives and truncation bounds.
//! * [`dif`]: the symbolic derivation behind the higher-order conditions.
//! * [`harness`]: property suites and verification reports.

// `!(x <= tol)` is used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod dif;
pub mod engine;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod sequence;
pub mod system;

pub use certificates::{
    check_all, make_scenario, ConditionReport, ConditionStatus, DichotomyCertificate, Scenario, ScenarioParams,
    TailMode, Variant,
};
pub use dif::{apply_d, expand_d_power, DifExpression, DifTerm};
pub use engine::{ConjugacyEngine, Direction, GrowthEnvelopes, TruncationPolicy};
pub use error::{Error, Result};
pub use harness::{VerificationReport, DEFAULT_HORIZON};
pub use linalg::{Matrix, Tensor3, Vector};
pub use sequence::SeqSpec;
pub use system::{MatrixSequence, PerturbationModel, Trajectory};

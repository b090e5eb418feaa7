//! Crate-wide error type.

use std::fmt;

/// Errors produced by the solvers, simulators, and certificate checks.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix dimensions are inconsistent with the operation.
    DimensionMismatch(String),
    /// An input that must be (Schur) stable has spectral radius ≥ 1 − ε_stab.
    UnstableInput { rho: f64 },
    /// The Riccati iteration diverged or stalled: the instance is not
    /// stabilizable (or not detectably so within the iteration budget).
    NotStabilizable { iterations: usize, last_step: f64 },
    /// A dense linear-algebra kernel failed (singular solve, eigensolver
    /// non-convergence, iteration budget exhausted while still converging).
    NumericalFailure(String),
    /// The cost normalization R_x ⪰ I / ‖P‖ ≥ 1 is violated.
    InvalidNormalization(String),
    /// A caller-supplied argument is outside the operation's domain.
    InvalidArgument(String),
    /// A stated precondition failed; the message names the inequality.
    PreconditionFailed(String),
    /// The self-bounding guarantee does not apply: α = 8‖P(0)‖²ε_op ≥ 1.
    OutsideGuarantee { alpha: f64 },
    /// The DARE became unsolvable partway along an instance interpolation.
    NotStabilizableOnCurve { t: f64 },
    /// A rollout state exceeded the overflow guard.
    BlowUp { time: usize, epoch: Option<u32> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::UnstableInput { rho } => {
                write!(f, "unstable input: spectral radius {rho} is not < 1")
            }
            Error::NotStabilizable { iterations, last_step } => write!(
                f,
                "not stabilizable: Riccati iteration made no geometric progress \
                 after {iterations} iterations (last step {last_step:.3e})"
            ),
            Error::NumericalFailure(msg) => write!(f, "numerical failure: {msg}"),
            Error::InvalidNormalization(msg) => write!(f, "invalid normalization: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::PreconditionFailed(msg) => write!(f, "precondition failed: {msg}"),
            Error::OutsideGuarantee { alpha } => write!(
                f,
                "outside the self-bounding guarantee: alpha = {alpha} ≥ 1"
            ),
            Error::NotStabilizableOnCurve { t } => {
                write!(f, "curve left the stabilizable set at t = {t}")
            }
            Error::BlowUp { time, epoch } => match epoch {
                Some(k) => write!(f, "state blow-up at time {time} (epoch {k})"),
                None => write!(f, "state blow-up at time {time}"),
            },
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

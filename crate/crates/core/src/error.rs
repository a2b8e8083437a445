use alloc::string::String;
use alloc::vec::Vec;

use crate::growth::Domain;

/// Everything that can go wrong in the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown growth rate `{0}`")]
    UnknownRate(String),
    #[error("invalid growth rate `{name}`: {reason}")]
    InvalidRate { name: String, reason: String },
    #[error("time {t} lies outside the {domain} domain")]
    OutOfDomain { t: f64, domain: Domain },
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("system domain {system} is incompatible with rate domain {rate}")]
    DomainMismatch { system: Domain, rate: Domain },
    #[error("invalid horizon [{t_min}, {t_max}]: {reason}")]
    InvalidHorizon { t_min: f64, t_max: f64, reason: String },
    #[error("tolerance {0:e} outside [1e-12, 1e-3]")]
    InvalidTolerance(f64),
    #[error("step size underflow at t = {t} (stiff or singular coefficient)")]
    StepUnderflow { t: f64 },
    #[error("non-finite coefficient at t = {t}")]
    NonFiniteCoefficient { t: f64 },
    #[error("step [{t0}, {t1}] is numerically singular (reciprocal condition {rcond:e})")]
    SingularStep { t0: f64, t1: f64, rcond: f64 },
    #[error("time {t} outside the grid [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("rank {rank} is not in 0..={n}")]
    InvalidRank { rank: usize, n: usize },
    #[error("rank {rank} splits an exponent tie (gap {gap:e}); gamma is likely inside the spectrum")]
    ExponentTie { rank: usize, gap: f64 },
    #[error("stable and unstable fibres are nearly parallel at t = {t} (angle {angle:e})")]
    ParallelFibers { t: f64, angle: f64 },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("envelope regression is degenerate (all log-mu offsets equal)")]
    DegenerateEnvelope,
    #[error("horizon too short: log mu span {0:.3} < 5")]
    ShortHorizon(f64),
    #[error("growth exceeds every power of mu on this horizon (slope drift {drift:.3})")]
    UnboundedGrowth { drift: f64 },
    #[error("verdicts are not monotone in gamma near {0:?}")]
    NonMonotone(Vec<f64>),
    #[error("zero vector")]
    ZeroVector,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("Gram matrix numerically singular at t = {t} (condition {cond:e})")]
    SingularGram { t: f64, cond: f64 },
    #[error("spectrum has no resolvent anchor to split at")]
    MissingAnchor,
    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

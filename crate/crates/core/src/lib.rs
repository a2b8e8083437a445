//! Nonuniform μ-dichotomy spectra of linear nonautonomous systems `x' = A(t) x`.
//!
//! Growth rates μ are handled in log space, evolution operators are stored as
//! log-scaled per-step transitions, and every dichotomy test works on envelopes
//! of `log ||Φ(t,s) P(s)||` against `log μ(t) - log μ(s)`.
#![no_std]
// `!(x > y)` is used on purpose throughout: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod dichotomy;
pub mod envelope;
pub mod error;
pub mod growth;
pub mod linalg;
pub mod lyapunov;
pub mod params;
pub mod propagator;
pub mod reduce;
pub mod scaled;
pub mod spectrum;
pub mod splitting;
pub mod system;

pub use error::{Error, Result};
pub use growth::{builtin_rate, mu_pow_ratio, sign_weight, Domain, GrowthRate};
pub use lyapunov::{check_spectral_bounds, mu_lyapunov, ExponentEstimate, LyapunovConfig};
pub use params::Params;
pub use dichotomy::{fit_constants, test_dichotomy, DichotomyAnalyzer, DichotomyConfig, DichotomyFit};
pub use propagator::{integrate, integrate_dense, phi, phi_shifted, PropagatorGrid};
pub use reduce::{
    block_diagonalize, gram_transform, verify_conjugacy, Conjugacy, ConjugacyConfig, ReduceConfig, SimilarityTransform,
};
pub use scaled::ScaledMatrix;
pub use spectrum::{
    bounded_growth_estimate, compute_spectrum, intersect_fibers, membership_bounded_backward,
    membership_bounded_forward, BoundedGrowthFit, SpectralInterval, SpectrumConfig, SpectrumResult,
};
pub use splitting::{estimate_splitting, transport_projection, FibreTrack, SplittingCandidate};
pub use system::{builtin_system, shift, LinearSystem, ShiftedSystem};

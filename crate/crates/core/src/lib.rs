//! Online linear regression with paid (noise-reducible) features.
//!
//! The learner observes noisy feature vectors and can pay per round to shrink
//! the noise covariance. This crate provides the pieces needed to study that
//! trade-off end to end:
//!
//! - [`linalg`]: small dense symmetric matrices, eigendecomposition, and an
//!   exact minimizer of (possibly indefinite) quadratics over a Euclidean ball;
//! - [`environment`]: noise-covariance profiles, problem instances (including
//!   the hard two-point and perturbed-profile families), and round sampling;
//! - [`oracle`]: closed-form expected losses, optimal predictors and the
//!   benchmark loss landscape used to score regret;
//! - [`estimators`]: the empirical loss estimators for known and unknown
//!   noise covariances, plus their confidence-width constants;
//! - [`policies`]: the greedy grid policy (known covariances) and the
//!   optimistic UCB policy (unknown covariances) with their schedules;
//! - [`harness`]: episode execution, regret scoring, multi-seed sweeps and
//!   regret-rate exponent fitting;
//! - [`concentration`]: Monte-Carlo validation of the matrix-martingale and
//!   uniform loss-convergence bounds.

pub mod concentration;
pub mod environment;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod policies;
pub mod rng;

pub use environment::{CovarianceProfile, Instance, RoundSample};
pub use estimators::{ConfidenceParams, KnownCovState, UnknownCovState};
pub use harness::{RunLog, SweepResult};
pub use linalg::{EigenDecomp, SymMatrix};
pub use oracle::LossLandscape;
pub use policies::{PolicyConfig, PolicyDecision, PolicyKind};

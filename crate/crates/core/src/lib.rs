//! Simulation and optimization toolkit for a two-stage downlink in which an
//! access point serves a near and a far NOMA user with the help of a passive
//! reconfigurable intelligent surface (RIS) and an active decode-and-forward
//! relay.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: configuration, geometry and channel synthesis.
//! - [`ratemodel`]: SINR and achievable-rate expressions for the hybrid
//!   (H-NOMA) and full (F-NOMA) relaying protocols.
//! - [`powerfeas`]: closed-form feasibility region of the power split and the
//!   exhaustive grid search over it.
//! - [`conic`]: a dense log-det barrier interior-point solver for the concave
//!   subproblems with Hermitian PSD, unit-diagonal matrix variables.
//! - [`phaseopt`]: lifting, rank-one DC penalty, successive convex
//!   approximation bounds and the penalty loop for the RIS phases.
//! - [`aodriver`]: alternating optimization of power and phases.
//! - [`jointopt`]: joint optimization of power and phases per iteration.
//! - [`harness`]: baselines, Monte Carlo sweeps, convergence traces and the
//!   brute-force small-M oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aodriver;
pub mod conic;
pub mod error;
pub mod harness;
pub mod jointopt;
pub mod linalg;
pub mod phaseopt;
pub mod powerfeas;
pub mod ratemodel;
pub mod report;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use ratemodel::{Criterion, EffectiveGains, PhaseConfig, PowerSplit, Protocol, ProtocolRates};
pub use report::{SolveReport, SolveStatus};
pub use scenario::{ChannelRealization, Link, ScenarioConfig};

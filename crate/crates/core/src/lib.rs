//! Weighted sum-rate maximization (WSRM) for the multiuser MISO broadcast channel
//! under general linear transmit-covariance constraints `tr(Σx Φℓ) ≤ γℓ`.
//!
//! Two precoding families are covered:
//!
//! - **Dirty-paper coding** through the dual multiple-access channel, solved either by an
//!   infeasible-start Newton method on the min-max formulation ([`dpc_newton`]) or by the
//!   inner-outer Lagrangian/subgradient scheme ([`dpc_dual`]).
//! - **Zero-forcing beamforming**, solved either by barrier gradient ascent on the
//!   dimension-reduced convex relaxation ([`zf_gradient`]) or by the two-step
//!   power/steering alternation over generalized inverses ([`zf_twostep`]).
//!
//! [`cellsim`] uses these solvers in a two-cell downlink simulator with active
//! inter-cell-interference constraints, fractional frequency reuse baselines, and
//! proportional-fair / hard-fair scheduling.
//!
//! Rates are in nats throughout.

pub mod cellsim;
pub mod dpc_dual;
pub mod dpc_newton;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod socp;
pub mod trace;
pub mod zf_core;
pub mod zf_gradient;
pub mod zf_twostep;

mod mac;

pub use error::{Error, Result};
pub use model::{
    constraint_usage, dpc_rates, zf_rates, ConstraintKind, Instance, LinearConstraint, Precoder,
    RateReport,
};
pub use trace::{ConvergenceTrace, TraceRow};

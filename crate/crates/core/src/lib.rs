//! Worst-case CVaR analysis toolkit for discrete-time linear stochastic systems.
//!
//! Given a linear system `x_{t+1} = A x_t + E w_t` (optionally with a bounded
//! input channel `D v_t`) whose disturbance is known only through its first two
//! moments, this crate computes distributionally robust risk certificates on
//! the squared state norm:
//!
//! - **Stability envelopes** — decaying bounds on the worst-case Conditional
//!   Value-at-Risk (CVaR) of `‖x_t‖²` over all zero-mean distributions with the
//!   given covariance.
//! - **Ultimate bounds and positively invariant balls** — radius conditions
//!   under which the tail risk of the state eventually (or forever) stays
//!   inside `‖x‖ ≤ r`.
//! - **Event-trigger synthesis** — the largest trigger thresholds `σ` for
//!   state-error and input-error triggered feedback that preserve those
//!   guarantees.
//! - **Seeded Monte Carlo validation** — reproducible trajectory ensembles
//!   with empirical CVaR summaries to check the certificates from below.
//!
//! The crate is organized along those lines: [`linalg`] is a small dense
//! matrix kernel (spectral norms, discrete Lyapunov solutions, Kronecker
//! products), [`risk`] holds the worst-case CVaR formulas and the empirical
//! estimator, [`certificates`] the radius conditions, [`triggers`] the
//! threshold synthesis, and [`simulation`] the rollout engine.
//!
//! Everything is pure computation over immutable values and safe to call
//! concurrently; the only parallelism lives in [`simulation::ensemble`], whose
//! output is bit-identical regardless of thread count.

pub mod certificates;
pub mod linalg;
pub mod risk;
pub mod simulation;
pub mod triggers;

#[cfg(test)]
pub(crate) mod test_util;

pub use certificates::{
    CertificateKind, LinearStochasticSystem, RiskCertificate, StabilityEnvelope,
};
pub use linalg::Matrix;
pub use risk::{CvarBounds, MomentAmbiguitySet, QuadraticLoss};
pub use simulation::{ControlMode, DisturbanceSampler, RiskSummary, SamplerKind, TrajectoryRecord};
pub use triggers::{ClosedLoopSystem, TriggerKind, TriggerPolicy};

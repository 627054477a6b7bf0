//! Event-trigger threshold synthesis and trigger evaluation.
//!
//! For the feedback loop `x_{t+1} = A x_t + B u_t + E w_t` with a stabilizing
//! gain `K` (so `‖A+BK‖ < 1`), event-triggered control holds the last
//! broadcast state `x̂` and updates it only when an error function crosses a
//! threshold:
//!
//! ```text
//! t_{k+1} = min{ t > t_k : φ(x_t, x̂_t) > σ },    t₀ = 0.
//! ```
//!
//! Between updates the loop behaves like `x_{t+1} = (A+BK) x_t + BK e_t + E w_t`
//! with `e_t = x̂_t − x_t`, so the error acts as a norm-bounded input with
//! channel `BK` (state-error triggers) or `B` (input-error triggers) and bound
//! `σ`. Plugging that into the robust radius conditions yields the largest
//! admissible thresholds:
//!
//! ```text
//! σ₁ ≤ ((1−‖A+BK‖)/‖BK‖)·(r − √((1/ε)Tr(P)))          (ultimate bound, ‖e‖)
//! σ₂ ≤ ((1−‖A+BK‖)/‖B‖) ·(r − √((1/ε)Tr(P)))          (ultimate bound, ‖Ke‖)
//! σ₃ ≤ (1/‖BK‖)·((1−‖A+BK‖)·r − √((1/ε)Tr(Σ_w EᵀE)))  (invariance, ‖e‖)
//! σ₄ ≤ (1/‖B‖) ·((1−‖A+BK‖)·r − √((1/ε)Tr(Σ_w EᵀE)))  (invariance, ‖Ke‖)
//! ```
//!
//! Input-error triggers come in an absolute form (`‖Ke_t‖ > σ`) and a
//! relative form (`‖Ke_t‖ > σ·‖x_t‖`); both are available. Only the absolute
//! variants keep the error norm-bounded by σ, so only they inherit the robust
//! certificate guarantees above; the relative rule is provided for
//! completeness and behaves very differently (its firing threshold scales
//! with `‖x_t‖`).

use crate::certificates::{CertificateError, LinearStochasticSystem};
use crate::linalg::{reachability_rank, vec_norm, Matrix};
use crate::risk::MomentAmbiguitySet;
use serde::Serialize;
use thiserror::Error;

/// Errors from trigger synthesis and evaluation.
#[derive(Debug, Error)]
pub enum TriggerError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("closed loop is not contractive: spectral norm {norm} >= 1")]
    NotContractive { norm: f64 },
    #[error("pair (A+BK, E) is not reachable: rank {rank} < {dimension}")]
    NotReachable { rank: usize, dimension: usize },
    #[error(
        "radius {radius} is below the certificate threshold {threshold} (square-rooted); \
         no admissible trigger exists"
    )]
    InfeasibleRadius { radius: f64, threshold: f64 },
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// What the trigger function φ measures and what it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    /// `‖x̂ − x‖ > σ`
    StateErrorAbs,
    /// `‖K(x̂ − x)‖ > σ`
    InputErrorAbs,
    /// `‖x̂ − x‖ > σ·‖x‖`
    StateErrorRel,
    /// `‖K(x̂ − x)‖ > σ·‖x‖`
    InputErrorRel,
}

impl TriggerKind {
    pub fn is_relative(self) -> bool {
        matches!(self, TriggerKind::StateErrorRel | TriggerKind::InputErrorRel)
    }

    pub fn uses_gain(self) -> bool {
        matches!(self, TriggerKind::InputErrorAbs | TriggerKind::InputErrorRel)
    }
}

/// A static event-trigger rule: fire when φ strictly exceeds its threshold.
#[derive(Debug, Clone)]
pub struct TriggerPolicy {
    kind: TriggerKind,
    sigma: f64,
    gain_k: Option<Matrix>,
}

impl TriggerPolicy {
    /// Build a policy; `gain_k` is required exactly for the input-error kinds.
    pub fn new(kind: TriggerKind, sigma: f64, gain_k: Option<Matrix>) -> Result<Self, TriggerError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(TriggerError::InvalidInput(format!(
                "threshold must be a nonnegative real, got {sigma}"
            )));
        }
        if kind.uses_gain() != gain_k.is_some() {
            return Err(TriggerError::InvalidInput(
                "input-error triggers require the feedback gain; state-error triggers must not \
                 carry one"
                    .into(),
            ));
        }
        Ok(Self {
            kind,
            sigma,
            gain_k,
        })
    }

    pub fn state_error_abs(sigma: f64) -> Result<Self, TriggerError> {
        Self::new(TriggerKind::StateErrorAbs, sigma, None)
    }

    pub fn input_error_abs(sigma: f64, gain_k: Matrix) -> Result<Self, TriggerError> {
        Self::new(TriggerKind::InputErrorAbs, sigma, Some(gain_k))
    }

    pub fn state_error_rel(sigma: f64) -> Result<Self, TriggerError> {
        Self::new(TriggerKind::StateErrorRel, sigma, None)
    }

    pub fn input_error_rel(sigma: f64, gain_k: Matrix) -> Result<Self, TriggerError> {
        Self::new(TriggerKind::InputErrorRel, sigma, Some(gain_k))
    }

    pub fn kind(&self) -> TriggerKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The trigger function value φ(x, x̂).
    pub fn phi(&self, current_state: &[f64], held_state: &[f64]) -> Result<f64, TriggerError> {
        if current_state.len() != held_state.len() {
            return Err(TriggerError::InvalidInput(format!(
                "state dimensions differ: {} vs {}",
                current_state.len(),
                held_state.len()
            )));
        }
        let error: Vec<f64> = held_state
            .iter()
            .zip(current_state)
            .map(|(h, c)| h - c)
            .collect();
        match &self.gain_k {
            Some(k) => {
                if k.cols() != error.len() {
                    return Err(TriggerError::InvalidInput(format!(
                        "gain expects dimension {}, got {}",
                        k.cols(),
                        error.len()
                    )));
                }
                Ok(vec_norm(&k.matvec(&error)))
            }
            None => Ok(vec_norm(&error)),
        }
    }
}

/// True iff the policy's φ strictly exceeds its threshold
/// (absolute kinds: σ; relative kinds: σ·‖current_state‖).
pub fn should_trigger(
    policy: &TriggerPolicy,
    current_state: &[f64],
    held_state: &[f64],
) -> Result<bool, TriggerError> {
    let phi = policy.phi(current_state, held_state)?;
    let threshold = if policy.kind.is_relative() {
        policy.sigma * vec_norm(current_state)
    } else {
        policy.sigma
    };
    Ok(phi > threshold)
}

/// The plant `x_{t+1} = A x_t + B u_t + E w_t` together with a stabilizing
/// feedback gain `K`.
///
/// Construction requires `‖A+BK‖ < 1` and reachability of `(A+BK, E)`, the
/// standing assumptions behind every synthesized threshold.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    a: Matrix,
    b: Matrix,
    e: Matrix,
    k: Matrix,
    disturbance: MomentAmbiguitySet,
    closed_loop: Matrix,
    closed_loop_norm: f64,
}

impl ClosedLoopSystem {
    pub fn new(
        a: Matrix,
        b: Matrix,
        e: Matrix,
        k: Matrix,
        disturbance: MomentAmbiguitySet,
    ) -> Result<Self, TriggerError> {
        if !a.is_square() {
            return Err(TriggerError::InvalidInput(format!(
                "state matrix must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        if b.rows() != n {
            return Err(TriggerError::InvalidInput(format!(
                "input matrix must have {n} rows, got {}",
                b.rows()
            )));
        }
        if k.rows() != b.cols() || k.cols() != n {
            return Err(TriggerError::InvalidInput(format!(
                "gain must be {}x{n}, got {}x{}",
                b.cols(),
                k.rows(),
                k.cols()
            )));
        }
        if e.rows() != n {
            return Err(TriggerError::InvalidInput(format!(
                "noise matrix must have {n} rows, got {}",
                e.rows()
            )));
        }
        if disturbance.dimension() != e.cols() {
            return Err(TriggerError::InvalidInput(format!(
                "disturbance dimension {} does not match noise matrix columns {}",
                disturbance.dimension(),
                e.cols()
            )));
        }
        let closed_loop = a.add(&b.mul(&k));
        let closed_loop_norm = closed_loop.spectral_norm();
        if closed_loop_norm >= 1.0 {
            return Err(TriggerError::NotContractive {
                norm: closed_loop_norm,
            });
        }
        let rank = reachability_rank(&closed_loop, &e)?;
        if rank != n {
            return Err(TriggerError::NotReachable { rank, dimension: n });
        }
        Ok(Self {
            a,
            b,
            e,
            k,
            disturbance,
            closed_loop,
            closed_loop_norm,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn gain(&self) -> &Matrix {
        &self.k
    }

    pub fn disturbance(&self) -> &MomentAmbiguitySet {
        &self.disturbance
    }

    pub fn epsilon(&self) -> f64 {
        self.disturbance.level()
    }

    /// `A + BK`.
    pub fn closed_loop_matrix(&self) -> &Matrix {
        &self.closed_loop
    }

    /// `‖A + BK‖`.
    pub fn closed_loop_norm(&self) -> f64 {
        self.closed_loop_norm
    }

    /// The loop with the feedback folded in and no exogenous input,
    /// `x_{t+1} = (A+BK) x_t + E w_t`, as seen by the certificates.
    pub fn as_autonomous(&self) -> LinearStochasticSystem {
        LinearStochasticSystem::autonomous(
            self.closed_loop.clone(),
            self.e.clone(),
            self.disturbance.clone(),
        )
        .expect("validated at closed-loop construction")
    }

    /// The loop with the held-state error treated as a norm-bounded input:
    /// channel `BK` for state-error triggers, `B` for input-error triggers.
    pub fn as_error_driven(&self, kind: TriggerKind, sigma: f64) -> LinearStochasticSystem {
        let channel = if kind.uses_gain() {
            self.b.clone()
        } else {
            self.b.mul(&self.k)
        };
        LinearStochasticSystem::with_bounded_input(
            self.closed_loop.clone(),
            channel,
            self.e.clone(),
            self.disturbance.clone(),
            sigma,
        )
        .expect("validated at closed-loop construction")
    }

    /// `Tr(P)` for `(A+BK) P (A+BK)ᵀ − P + E Σ_w Eᵀ = 0`.
    pub fn lyapunov_trace(&self) -> f64 {
        self.as_autonomous()
            .lyapunov_trace()
            .expect("closed loop is contractive by construction")
    }
}

/// Largest admissible σ for an ultimate-bound guarantee; `channel_norm` is
/// `‖BK‖` or `‖B‖`.
fn ultimate_sigma(cl: &ClosedLoopSystem, r: f64, channel_norm: f64) -> Result<f64, TriggerError> {
    check_radius(r)?;
    let sqrt_threshold = (cl.lyapunov_trace() / cl.epsilon()).sqrt();
    let slack = r - sqrt_threshold;
    if slack < 0.0 {
        return Err(TriggerError::InfeasibleRadius {
            radius: r,
            threshold: sqrt_threshold,
        });
    }
    Ok((1.0 - cl.closed_loop_norm()) / channel_norm * slack)
}

/// Largest admissible σ for a positive-invariance guarantee.
fn invariance_sigma(cl: &ClosedLoopSystem, r: f64, channel_norm: f64) -> Result<f64, TriggerError> {
    check_radius(r)?;
    let noise_term = (cl.as_autonomous().noise_energy() / cl.epsilon()).sqrt();
    let numerator = (1.0 - cl.closed_loop_norm()) * r - noise_term;
    if numerator < 0.0 {
        return Err(TriggerError::InfeasibleRadius {
            radius: r,
            threshold: noise_term / (1.0 - cl.closed_loop_norm()),
        });
    }
    Ok(numerator / channel_norm)
}

fn check_radius(r: f64) -> Result<(), TriggerError> {
    if !(r > 0.0 && r.is_finite()) {
        Err(TriggerError::InvalidInput(format!(
            "radius must be a positive real, got {r}"
        )))
    } else {
        Ok(())
    }
}

/// Largest σ₁ for the absolute state-error trigger `‖e_t‖ > σ₁` that keeps
/// `‖x‖ ≤ r` an ultimate bound.
pub fn sigma1_max(cl: &ClosedLoopSystem, r: f64) -> Result<f64, TriggerError> {
    ultimate_sigma(cl, r, cl.b.mul(&cl.k).spectral_norm())
}

/// Largest σ₂ for the absolute input-error trigger `‖K e_t‖ > σ₂` (ultimate
/// bound).
pub fn sigma2_max(cl: &ClosedLoopSystem, r: f64) -> Result<f64, TriggerError> {
    ultimate_sigma(cl, r, cl.b.spectral_norm())
}

/// Largest σ₃ for the absolute state-error trigger (positive invariance).
pub fn sigma3_max(cl: &ClosedLoopSystem, r: f64) -> Result<f64, TriggerError> {
    invariance_sigma(cl, r, cl.b.mul(&cl.k).spectral_norm())
}

/// Largest σ₄ for the input-error trigger (positive invariance).
pub fn sigma4_max(cl: &ClosedLoopSystem, r: f64) -> Result<f64, TriggerError> {
    invariance_sigma(cl, r, cl.b.spectral_norm())
}

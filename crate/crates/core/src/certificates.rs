//! Risk certificates for linear stochastic systems.
//!
//! For `x_{t+1} = A x_t + E w_t` with `‖A‖ < 1`, a reachable pair `(A, E)`,
//! and disturbances known only through a moment ambiguity set, the worst-case
//! CVaR of `‖x_t‖²` obeys a decaying envelope
//!
//! ```text
//! (1 + α²)·λᵗ·‖x₀‖² + (1 + 1/α²)·(1/ε)·Tr(P),      λ = ‖A‖²,
//! ```
//!
//! where `P` solves the discrete Lyapunov equation `A P Aᵀ − P + E Σ_w Eᵀ = 0`.
//! From that envelope follow radius conditions on the ball `‖x‖ ≤ r`:
//!
//! - ultimate bound: `r² > (1/ε)·Tr(P)` (strict);
//! - positive invariance: `r² ≥ (1/(ε(1−‖A‖)²))·Tr(Σ_w EᵀE)` (non-strict),
//!   obtained with the norm-splitting weight `α` fixed by `(1+α²)‖A‖ = 1`;
//! - with a bounded input channel `D v_t`, `‖v‖ ≤ d`, the robust analogues
//!   add `‖D‖·d/(1−‖A‖)` to the square-rooted thresholds.
//!
//! Certificates carry the threshold, the signed margin `r² − threshold`, the
//! α weights used, and (for ultimate bounds) a deterministic settling-time
//! witness.
//!
//! A note on tightness: the invariance chain bounds the one-step coefficient
//! on `‖x_t‖²` by `‖A‖` (not `‖A‖²`) at the canonical α, which is the chain
//! implemented here; the resulting condition is mildly conservative.

use crate::linalg::{reachability_rank, solve_discrete_lyapunov, trace_product, LinalgError, Matrix};
use crate::risk::MomentAmbiguitySet;
use serde::Serialize;
use thiserror::Error;

/// Errors produced when building systems or evaluating certificates.
#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("system is not contractive: spectral norm {norm} >= 1")]
    NotContractive { norm: f64 },
    #[error("pair (a, e) is not reachable: rank {rank} < {dimension}")]
    NotReachable { rank: usize, dimension: usize },
    #[error("certificate does not apply: {0}")]
    WrongKind(String),
    #[error("alpha {alpha} makes the invariance bound vacuous (coefficient {coefficient} <= 0)")]
    InfeasibleAlpha { alpha: f64, coefficient: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Discrete-time linear stochastic system `x_{t+1} = A x_t (+ D v_t) + E w_t`.
///
/// The disturbance `w_t` is i.i.d. with law known only through the moment
/// ambiguity set; the optional channel `D` carries a norm-bounded input
/// `‖v_t‖ ≤ d`. Construction checks dimensions and reachability of `(A, E)`
/// and records `‖A‖`; contractivity itself is demanded by each certificate,
/// not by the constructor.
#[derive(Debug, Clone)]
pub struct LinearStochasticSystem {
    a: Matrix,
    d: Option<Matrix>,
    e: Matrix,
    disturbance: MomentAmbiguitySet,
    input_bound: Option<f64>,
    a_norm: f64,
}

impl LinearStochasticSystem {
    /// System without inputs: `x_{t+1} = A x_t + E w_t`.
    pub fn autonomous(
        a: Matrix,
        e: Matrix,
        disturbance: MomentAmbiguitySet,
    ) -> Result<Self, CertificateError> {
        Self::build(a, None, e, disturbance, None)
    }

    /// System with a norm-bounded input channel: `x_{t+1} = A x_t + D v_t + E w_t`,
    /// `‖v_t‖ ≤ input_bound`.
    pub fn with_bounded_input(
        a: Matrix,
        d: Matrix,
        e: Matrix,
        disturbance: MomentAmbiguitySet,
        input_bound: f64,
    ) -> Result<Self, CertificateError> {
        Self::build(a, Some(d), e, disturbance, Some(input_bound))
    }

    fn build(
        a: Matrix,
        d: Option<Matrix>,
        e: Matrix,
        disturbance: MomentAmbiguitySet,
        input_bound: Option<f64>,
    ) -> Result<Self, CertificateError> {
        if !a.is_square() {
            return Err(CertificateError::InvalidInput(format!(
                "state matrix must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        if e.rows() != n {
            return Err(CertificateError::InvalidInput(format!(
                "noise matrix must have {n} rows, got {}",
                e.rows()
            )));
        }
        if disturbance.dimension() != e.cols() {
            return Err(CertificateError::InvalidInput(format!(
                "disturbance dimension {} does not match noise matrix columns {}",
                disturbance.dimension(),
                e.cols()
            )));
        }
        if let Some(ref d) = d {
            if d.rows() != n {
                return Err(CertificateError::InvalidInput(format!(
                    "input channel must have {n} rows, got {}",
                    d.rows()
                )));
            }
        }
        if let Some(bound) = input_bound {
            if !(bound >= 0.0 && bound.is_finite()) {
                return Err(CertificateError::InvalidInput(format!(
                    "input bound must be a nonnegative real, got {bound}"
                )));
            }
        }
        let rank = reachability_rank(&a, &e)?;
        if rank != n {
            return Err(CertificateError::NotReachable { rank, dimension: n });
        }
        let a_norm = a.spectral_norm();
        Ok(Self {
            a,
            d,
            e,
            disturbance,
            input_bound,
            a_norm,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn input_channel(&self) -> Option<&Matrix> {
        self.d.as_ref()
    }

    pub fn input_bound(&self) -> Option<f64> {
        self.input_bound
    }

    pub fn disturbance(&self) -> &MomentAmbiguitySet {
        &self.disturbance
    }

    /// Risk level `ε` of the disturbance ambiguity set.
    pub fn epsilon(&self) -> f64 {
        self.disturbance.level()
    }

    /// Spectral norm `‖A‖` recorded at construction.
    pub fn a_norm(&self) -> f64 {
        self.a_norm
    }

    pub fn is_contractive(&self) -> bool {
        self.a_norm < 1.0
    }

    /// `Tr(P)` for the discrete Lyapunov solution `A P Aᵀ − P + E Σ_w Eᵀ = 0`.
    pub fn lyapunov_trace(&self) -> Result<f64, CertificateError> {
        self.require_contractive()?;
        let q = self
            .e
            .mul(self.disturbance.covariance())
            .mul(&self.e.transpose());
        Ok(solve_discrete_lyapunov(&self.a, &q)?.trace())
    }

    /// `Tr(Σ_w EᵀE)`, the one-step noise energy.
    pub fn noise_energy(&self) -> f64 {
        trace_product(
            self.disturbance.covariance(),
            &self.e.transpose().mul(&self.e),
        )
    }

    fn require_contractive(&self) -> Result<(), CertificateError> {
        if self.is_contractive() {
            Ok(())
        } else {
            Err(CertificateError::NotContractive { norm: self.a_norm })
        }
    }

    fn require_autonomous(&self, what: &str) -> Result<(), CertificateError> {
        if self.d.is_some() {
            Err(CertificateError::WrongKind(format!(
                "{what} applies to systems without an input channel"
            )))
        } else {
            Ok(())
        }
    }

    fn require_input_channel(&self) -> Result<(&Matrix, f64), CertificateError> {
        match (&self.d, self.input_bound) {
            (Some(d), Some(bound)) => Ok((d, bound)),
            _ => Err(CertificateError::WrongKind(
                "robust certificates require an input channel and bound".into(),
            )),
        }
    }
}

/// Parametric envelope `beta_coeff·λᵗ·‖x₀‖² + gamma_coeff·v̄² + offset_c`
/// bounding the worst-case CVaR of `‖x_t‖²` for all `t`.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityEnvelope {
    /// Decay rate `λ = ‖A‖²`.
    pub lambda: f64,
    /// Transient coefficient `1 + α₁²`.
    pub beta_coeff: f64,
    /// Input gain; zero for autonomous systems.
    pub gamma_coeff: f64,
    /// Constant offset.
    pub offset_c: f64,
    pub alpha1: f64,
    pub alpha2: Option<f64>,
}

impl StabilityEnvelope {
    /// Envelope value at step `t` for initial energy `x0_norm_sq` and input
    /// supremum `input_sup_sq = max_τ ‖v_τ‖²`.
    pub fn value_at(&self, x0_norm_sq: f64, input_sup_sq: f64, t: u32) -> f64 {
        self.beta_coeff * self.lambda.powi(t as i32) * x0_norm_sq
            + self.gamma_coeff * input_sup_sq
            + self.offset_c
    }
}

/// Compute the stability envelope for the given norm-splitting weights.
///
/// Autonomous: `beta_coeff = 1 + α₁²`, `offset_c = (1 + 1/α₁²)(1/ε)Tr(P)`.
/// With an input channel: the offset gains the factor `(1 + 1/α₂²)` and
/// `gamma_coeff = (1 + 1/α₁²)(1 + α₂²)(‖D‖/(1−‖A‖))²`.
pub fn stability_envelope(
    sys: &LinearStochasticSystem,
    alpha1: f64,
    alpha2: Option<f64>,
) -> Result<StabilityEnvelope, CertificateError> {
    if !(alpha1 > 0.0 && alpha1.is_finite()) {
        return Err(CertificateError::InvalidInput(format!(
            "alpha1 must be a positive real, got {alpha1}"
        )));
    }
    match (sys.input_channel(), alpha2) {
        (Some(_), None) => {
            return Err(CertificateError::InvalidInput(
                "alpha2 is required when an input channel is present".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(CertificateError::InvalidInput(
                "alpha2 given but the system has no input channel".into(),
            ))
        }
        _ => {}
    }
    if let Some(a2) = alpha2 {
        if !(a2 > 0.0 && a2.is_finite()) {
            return Err(CertificateError::InvalidInput(format!(
                "alpha2 must be a positive real, got {a2}"
            )));
        }
    }
    let trace_p = sys.lyapunov_trace()?;
    let a1_sq = alpha1 * alpha1;
    let lambda = sys.a_norm() * sys.a_norm();
    let base_offset = (1.0 + 1.0 / a1_sq) * trace_p / sys.epsilon();
    let (gamma_coeff, offset_c) = match (sys.input_channel(), alpha2) {
        (Some(d), Some(a2)) => {
            let a2_sq = a2 * a2;
            let dn = d.spectral_norm();
            let gain = dn / (1.0 - sys.a_norm());
            (
                (1.0 + 1.0 / a1_sq) * (1.0 + a2_sq) * gain * gain,
                base_offset * (1.0 + 1.0 / a2_sq),
            )
        }
        _ => (0.0, base_offset),
    };
    Ok(StabilityEnvelope {
        lambda,
        beta_coeff: 1.0 + a1_sq,
        gamma_coeff,
        offset_c,
        alpha1,
        alpha2,
    })
}

/// Which radius condition a certificate checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    UltimateBound,
    Invariance,
    RobustUltimateBound,
    RobustInvariance,
}

/// Deterministic settling-time witness for an ultimate bound.
///
/// From the envelope `(1 + alpha_sq)·decayᵗ·‖x₀‖² − slack`, the state risk is
/// inside the ball once the transient term drops below `slack`.
#[derive(Debug, Clone, Serialize)]
pub struct SettlingWitness {
    pub alpha_sq: f64,
    pub decay: f64,
    pub slack: f64,
}

impl SettlingWitness {
    /// Smallest `T ≥ 0` with `(1 + alpha_sq)·decayᵀ·x0_norm_sq ≤ slack`.
    pub fn settling_time(&self, x0_norm_sq: f64) -> u64 {
        let transient = (1.0 + self.alpha_sq) * x0_norm_sq;
        if transient <= self.slack {
            return 0;
        }
        if self.decay <= 0.0 {
            return 1;
        }
        let ratio = self.slack / transient;
        (ratio.ln() / self.decay.ln()).ceil().max(1.0) as u64
    }
}

/// Outcome of one radius condition.
///
/// `threshold_value` is always on the `r²` scale and `margin = r² − threshold`,
/// so a satisfied ultimate bound has `margin > 0` and a satisfied invariance
/// condition has `margin ≥ 0`.
#[derive(Debug, Clone, Serialize)]
pub struct RiskCertificate {
    pub kind: CertificateKind,
    pub radius: f64,
    pub threshold_value: f64,
    pub margin: f64,
    pub satisfied: bool,
    /// Norm-splitting weight: the settling witness α for ultimate bounds, the
    /// canonical α of `(1+α²)‖A‖ = 1` for invariance kinds.
    pub alpha1: Option<f64>,
    /// Input-channel weight; `None` for autonomous kinds or a degenerate
    /// (zero) input channel.
    pub alpha2: Option<f64>,
    /// Present for satisfied ultimate bounds when the documented α rule
    /// yields positive slack.
    pub settling: Option<SettlingWitness>,
}

fn check_radius(r: f64) -> Result<(), CertificateError> {
    if !(r > 0.0 && r.is_finite()) {
        Err(CertificateError::InvalidInput(format!(
            "radius must be a positive real, got {r}"
        )))
    } else {
        Ok(())
    }
}

/// Settling-time α rule shared by the ultimate-bound certificates.
///
/// α² should maximize the slack `δ = r² − (1 + 1/α²)·threshold`; since δ only
/// grows with α² we pick the deterministic value
/// `α² = max(1, 10·threshold/δ₀)` with `δ₀` the slack at `α = 1`, capped at
/// `99` so the transient coefficient `1 + α²` stays at most 100. When `δ₀ ≤ 0`
/// the cap is used directly.
fn settling_witness(r: f64, threshold: f64, lambda: f64) -> Option<SettlingWitness> {
    let delta0 = r * r - 2.0 * threshold;
    let alpha_sq = if delta0 > 0.0 {
        (10.0 * threshold / delta0).clamp(1.0, 99.0)
    } else {
        99.0
    };
    let slack = r * r - (1.0 + 1.0 / alpha_sq) * threshold;
    (slack > 0.0).then_some(SettlingWitness {
        alpha_sq,
        decay: lambda,
        slack,
    })
}

/// Ultimate-bound certificate for an autonomous system:
/// satisfied iff `r² > (1/ε)·Tr(P)` (strict).
pub fn ultimate_bound_certificate(
    sys: &LinearStochasticSystem,
    r: f64,
) -> Result<RiskCertificate, CertificateError> {
    sys.require_autonomous("the ultimate-bound certificate")?;
    check_radius(r)?;
    let threshold = sys.lyapunov_trace()? / sys.epsilon();
    let satisfied = r * r > threshold;
    let lambda = sys.a_norm() * sys.a_norm();
    let settling = satisfied
        .then(|| settling_witness(r, threshold, lambda))
        .flatten();
    Ok(RiskCertificate {
        kind: CertificateKind::UltimateBound,
        radius: r,
        threshold_value: threshold,
        margin: r * r - threshold,
        satisfied,
        alpha1: settling.as_ref().map(|w| w.alpha_sq.sqrt()),
        alpha2: None,
        settling,
    })
}

/// Canonical norm-splitting weight: the α > 0 with `(1 + α²)‖A‖ = 1`.
fn canonical_alpha(a_norm: f64) -> f64 {
    (1.0 / a_norm - 1.0).sqrt()
}

/// Positive-invariance certificate for an autonomous system:
/// satisfied iff `r² ≥ (1/(ε(1−‖A‖)²))·Tr(Σ_w EᵀE)` (non-strict).
pub fn invariance_certificate(
    sys: &LinearStochasticSystem,
    r: f64,
) -> Result<RiskCertificate, CertificateError> {
    sys.require_autonomous("the invariance certificate")?;
    sys.require_contractive()?;
    check_radius(r)?;
    let one_minus = 1.0 - sys.a_norm();
    let threshold = sys.noise_energy() / (sys.epsilon() * one_minus * one_minus);
    Ok(RiskCertificate {
        kind: CertificateKind::Invariance,
        radius: r,
        threshold_value: threshold,
        margin: r * r - threshold,
        satisfied: r * r >= threshold,
        alpha1: Some(canonical_alpha(sys.a_norm())),
        alpha2: None,
        settling: None,
    })
}

/// Invariance condition for an arbitrary norm-splitting weight α:
/// satisfied iff `(1/ε)·Tr(Σ_w EᵀE) ≤ α²(1/(1+α²) − ‖A‖²)·r²`.
///
/// The coefficient on `r²` must be positive for the bound to say anything;
/// otherwise the α is rejected as infeasible. The coefficient is maximized by
/// the canonical α, where the condition coincides with
/// [`invariance_certificate`].
pub fn invariance_certificate_general_alpha(
    sys: &LinearStochasticSystem,
    r: f64,
    alpha: f64,
) -> Result<RiskCertificate, CertificateError> {
    sys.require_autonomous("the invariance certificate")?;
    sys.require_contractive()?;
    check_radius(r)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CertificateError::InvalidInput(format!(
            "alpha must be a positive real, got {alpha}"
        )));
    }
    let alpha_sq = alpha * alpha;
    let coefficient = alpha_sq * (1.0 / (1.0 + alpha_sq) - sys.a_norm() * sys.a_norm());
    if coefficient <= 0.0 {
        return Err(CertificateError::InfeasibleAlpha { alpha, coefficient });
    }
    let threshold = sys.noise_energy() / (sys.epsilon() * coefficient);
    Ok(RiskCertificate {
        kind: CertificateKind::Invariance,
        radius: r,
        threshold_value: threshold,
        margin: r * r - threshold,
        satisfied: r * r >= threshold,
        alpha1: Some(alpha),
        alpha2: None,
        settling: None,
    })
}

/// Ultimate-bound certificate with a bounded input channel:
/// satisfied iff `r² > (‖D‖·d/(1−‖A‖) + √((1/ε)Tr(P)))²` (strict).
///
/// Records `α₂² = ((1−‖A‖)/(‖D‖·d))·√((1/ε)Tr(P))`. A degenerate channel
/// (`d = 0` or `‖D‖ = 0`) reduces to the autonomous threshold with `α₂`
/// undefined.
pub fn robust_ultimate_bound_certificate(
    sys: &LinearStochasticSystem,
    r: f64,
) -> Result<RiskCertificate, CertificateError> {
    let (d_matrix, bound) = sys.require_input_channel()?;
    sys.require_contractive()?;
    check_radius(r)?;
    let trace_term = (sys.lyapunov_trace()? / sys.epsilon()).sqrt();
    let channel_gain = d_matrix.spectral_norm() * bound;
    let (threshold, alpha2) = if channel_gain == 0.0 {
        (trace_term * trace_term, None)
    } else {
        let root = channel_gain / (1.0 - sys.a_norm()) + trace_term;
        let alpha2_sq = (1.0 - sys.a_norm()) / channel_gain * trace_term;
        (root * root, Some(alpha2_sq.sqrt()))
    };
    let satisfied = r * r > threshold;
    let lambda = sys.a_norm() * sys.a_norm();
    let settling = satisfied
        .then(|| settling_witness(r, threshold, lambda))
        .flatten();
    Ok(RiskCertificate {
        kind: CertificateKind::RobustUltimateBound,
        radius: r,
        threshold_value: threshold,
        margin: r * r - threshold,
        satisfied,
        alpha1: settling.as_ref().map(|w| w.alpha_sq.sqrt()),
        alpha2,
        settling,
    })
}

/// Robust positive-invariance certificate with a bounded input channel:
/// satisfied iff `r² ≥ (1/(1−‖A‖)²)(‖D‖·d + √((1/ε)Tr(Σ_w EᵀE)))²`
/// (non-strict).
///
/// Records the canonical α₁ and `α₂² = √((1/ε)Tr(Σ_w EᵀE))/(‖D‖·d)`; a
/// degenerate channel reduces to the autonomous invariance threshold.
pub fn robust_invariance_certificate(
    sys: &LinearStochasticSystem,
    r: f64,
) -> Result<RiskCertificate, CertificateError> {
    let (d_matrix, bound) = sys.require_input_channel()?;
    sys.require_contractive()?;
    check_radius(r)?;
    let noise_term = (sys.noise_energy() / sys.epsilon()).sqrt();
    let channel_gain = d_matrix.spectral_norm() * bound;
    let one_minus = 1.0 - sys.a_norm();
    let root = (channel_gain + noise_term) / one_minus;
    let threshold = root * root;
    let alpha2 = (channel_gain > 0.0).then(|| (noise_term / channel_gain).sqrt());
    Ok(RiskCertificate {
        kind: CertificateKind::RobustInvariance,
        radius: r,
        threshold_value: threshold,
        margin: r * r - threshold,
        satisfied: r * r >= threshold,
        alpha1: Some(canonical_alpha(sys.a_norm())),
        alpha2,
        settling: None,
    })
}

/// One-step worst-case-CVaR bound on `‖x_{t+1}‖²` given `‖x_t‖² = state_norm_sq`,
/// at the canonical α (and the robust α₂ when an input channel is present):
///
/// ```text
/// ‖A‖·s + (1/(1−‖A‖))·(1/ε)·Tr(Σ_w EᵀE)                       (autonomous)
/// ‖A‖·s + (1/(1−‖A‖))·(‖D‖·d + √((1/ε)Tr(Σ_w EᵀE)))²          (with inputs)
/// ```
///
/// The map is affine in `s` with slope `‖A‖ < 1`; its fixed point is the
/// matching invariance threshold.
pub fn one_step_risk_map(
    sys: &LinearStochasticSystem,
    state_norm_sq: f64,
) -> Result<f64, CertificateError> {
    sys.require_contractive()?;
    if !(state_norm_sq >= 0.0 && state_norm_sq.is_finite()) {
        return Err(CertificateError::InvalidInput(format!(
            "state energy must be a nonnegative real, got {state_norm_sq}"
        )));
    }
    let one_minus = 1.0 - sys.a_norm();
    let offset = match (sys.input_channel(), sys.input_bound()) {
        (Some(d), Some(bound)) => {
            let root = d.spectral_norm() * bound + (sys.noise_energy() / sys.epsilon()).sqrt();
            root * root / one_minus
        }
        _ => sys.noise_energy() / sys.epsilon() / one_minus,
    };
    Ok(sys.a_norm() * state_norm_sq + offset)
}

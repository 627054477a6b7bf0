//! Seeded Monte Carlo rollouts for open-loop, periodic, and event-triggered
//! control.
//!
//! Reproducibility is the organizing constraint here. Disturbances come from
//! a counter-based generator ([`CounterRng`]): output `i` is a pure hash of
//! `(key, i)`, so a trajectory is a function of its configuration alone.
//! Ensembles split streams per run — run `i` re-keys the generator with
//! `mix64(seed ^ i)` — which makes every run independent of execution order
//! and thread count; [`ensemble`] aggregates into a preallocated, index-
//! addressed table, so its output is bit-identical whether it runs on one
//! thread or many.
//!
//! All sampler kinds are zero-mean and rescaled so their population
//! covariance equals the configured matrix exactly, which keeps every kind —
//! including the heavy-tailed ones — inside the moment ambiguity set the
//! certificates quantify over.

use crate::linalg::{cholesky, vec_norm, Matrix};
use crate::triggers::{should_trigger, TriggerPolicy};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Errors from simulation configuration and execution.
#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Trigger(#[from] crate::triggers::TriggerError),
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer from splitmix64. Bijective on `u64`.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Counter-based 64-bit generator (splitmix64 evaluated as a pure function of
/// the counter).
///
/// Output `i` is `mix64(key + (i+1)·GOLDEN_GAMMA)`: no hidden state beyond
/// the counter, so streams can be split, replayed, and compared across
/// processes. Stream `i` of a base seed is keyed by `mix64(seed ^ i)`, the
/// derivation used by [`ensemble`] for its runs.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Generator for stream `stream` of `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Self::new(mix64(seed ^ stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1].
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal pair via Box-Muller.
    fn next_normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        (radius * angle.cos(), radius * angle.sin())
    }

    fn next_normal(&mut self) -> f64 {
        self.next_normal_pair().0
    }

    /// Gamma(shape, 1) for shape >= 1 by the Marsaglia-Tsang squeeze.
    fn next_gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape >= 1.0);
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.next_f64_open();
            if u < 1.0 - 0.0331 * x.powi(4) {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }
}

/// Disturbance families, all zero-mean with unit marginal variance before the
/// covariance shaping is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Gaussian,
    /// Heavy-tailed; rescaled by `√((dof−2)/dof)` so second moments match.
    /// Requires `dof > 2`.
    StudentT { dof: f64 },
    /// Uniform on `[−√3, √3]`.
    ScaledUniform,
    /// `±1` with equal probability.
    TwoPoint,
}

/// Seeded sampler producing i.i.d. disturbance vectors with the configured
/// covariance.
///
/// Vectors are built as `L z` where `L` is the Cholesky factor of the
/// covariance and `z` has i.i.d. zero-mean unit-variance entries of the
/// chosen kind.
#[derive(Debug, Clone)]
pub struct DisturbanceSampler {
    kind: SamplerKind,
    covariance: Matrix,
    chol: Matrix,
    seed: u64,
}

impl DisturbanceSampler {
    pub fn new(kind: SamplerKind, covariance: Matrix, seed: u64) -> Result<Self, SimulationError> {
        if let SamplerKind::StudentT { dof } = kind {
            if !(dof > 2.0 && dof.is_finite()) {
                return Err(SimulationError::InvalidInput(format!(
                    "student-t degrees of freedom must exceed 2, got {dof}"
                )));
            }
        }
        let chol = cholesky(&covariance).map_err(|e| {
            SimulationError::InvalidInput(format!("covariance must be positive definite: {e}"))
        })?;
        Ok(Self {
            kind,
            covariance,
            chol,
            seed,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.covariance.rows()
    }

    /// Independent stream for one run of an ensemble.
    pub fn stream_for_run(&self, run: u64) -> DisturbanceStream<'_> {
        DisturbanceStream {
            sampler: self,
            rng: CounterRng::stream(self.seed, run),
        }
    }

    fn standardized(&self, rng: &mut CounterRng, out: &mut [f64]) {
        match self.kind {
            SamplerKind::Gaussian => {
                let mut i = 0;
                while i < out.len() {
                    let (a, b) = rng.next_normal_pair();
                    out[i] = a;
                    if i + 1 < out.len() {
                        out[i + 1] = b;
                    }
                    i += 2;
                }
            }
            SamplerKind::StudentT { dof } => {
                let scale = ((dof - 2.0) / dof).sqrt();
                for v in out.iter_mut() {
                    let z = rng.next_normal();
                    let chi_sq = 2.0 * rng.next_gamma(dof / 2.0);
                    *v = scale * z * (dof / chi_sq).sqrt();
                }
            }
            SamplerKind::ScaledUniform => {
                let half_width = 3.0_f64.sqrt();
                for v in out.iter_mut() {
                    *v = half_width * (2.0 * rng.next_f64() - 1.0);
                }
            }
            SamplerKind::TwoPoint => {
                for v in out.iter_mut() {
                    *v = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
    }
}

/// One run's disturbance sequence.
#[derive(Debug)]
pub struct DisturbanceStream<'a> {
    sampler: &'a DisturbanceSampler,
    rng: CounterRng,
}

impl DisturbanceStream<'_> {
    pub fn draw(&mut self) -> Vec<f64> {
        let mut z = vec![0.0; self.sampler.dimension()];
        self.sampler.standardized(&mut self.rng, &mut z);
        self.sampler.chol.matvec(&z)
    }
}

/// The plant matrices a rollout integrates; the input matrix is only needed
/// when a feedback mode is used.
#[derive(Debug, Clone)]
pub struct SimPlant {
    a: Matrix,
    b: Option<Matrix>,
    e: Matrix,
}

impl SimPlant {
    pub fn new(a: Matrix, b: Option<Matrix>, e: Matrix) -> Result<Self, SimulationError> {
        if !a.is_square() {
            return Err(SimulationError::InvalidInput(format!(
                "state matrix must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if e.rows() != a.rows() {
            return Err(SimulationError::InvalidInput(format!(
                "noise matrix must have {} rows, got {}",
                a.rows(),
                e.rows()
            )));
        }
        if let Some(ref b) = b {
            if b.rows() != a.rows() {
                return Err(SimulationError::InvalidInput(format!(
                    "input matrix must have {} rows, got {}",
                    a.rows(),
                    b.rows()
                )));
            }
        }
        Ok(Self { a, b, e })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }
}

impl From<&crate::triggers::ClosedLoopSystem> for SimPlant {
    fn from(cl: &crate::triggers::ClosedLoopSystem) -> Self {
        Self {
            a: cl.a().clone(),
            b: Some(cl.b().clone()),
            e: cl.e().clone(),
        }
    }
}

/// How the control input is produced along a rollout.
#[derive(Debug, Clone)]
pub enum ControlMode {
    /// No input: `x_{t+1} = A x_t + E w_t`.
    None,
    /// `u_t = K x_t` at every step.
    Periodic { gain: Matrix },
    /// `u_t = K x̂_t` with `x̂` refreshed by the trigger policy.
    ///
    /// Per-step order: observe `x_t`, evaluate φ against the held `x̂` (the
    /// initial step always updates), refresh `x̂` on a trigger, apply
    /// `u_t = K x̂_t`, then advance the dynamics.
    EventTriggered {
        gain: Matrix,
        policy: TriggerPolicy,
    },
}

/// Everything one rollout produced.
///
/// `states` has `horizon + 1` entries; `inputs`, `held_states` and
/// `disturbances` have `horizon` (inputs and held states are empty without a
/// controller). `trigger_times` starts at 0 for both feedback modes and lists
/// every step whose control value was refreshed.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub held_states: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub trigger_times: Vec<usize>,
}

impl TrajectoryRecord {
    pub fn update_count(&self) -> usize {
        self.trigger_times.len()
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state_norm_sq(&self, t: usize) -> f64 {
        self.states[t].iter().map(|v| v * v).sum()
    }

    /// 1 if the step refreshed the control value, else 0.
    pub fn triggered_at(&self, t: usize) -> bool {
        self.trigger_times.binary_search(&t).is_ok()
    }
}

/// Simulate one seeded trajectory (stream 0 of the sampler's seed).
pub fn rollout(
    plant: &SimPlant,
    mode: &ControlMode,
    x0: &[f64],
    horizon: usize,
    sampler: &DisturbanceSampler,
) -> Result<TrajectoryRecord, SimulationError> {
    rollout_stream(plant, mode, x0, horizon, sampler, 0)
}

/// Simulate one trajectory on a specific RNG stream; [`ensemble`] runs stream
/// `i` for run `i`, so `rollout_stream(.., i)` reproduces any single ensemble
/// member.
pub fn rollout_stream(
    plant: &SimPlant,
    mode: &ControlMode,
    x0: &[f64],
    horizon: usize,
    sampler: &DisturbanceSampler,
    run: u64,
) -> Result<TrajectoryRecord, SimulationError> {
    let n = plant.state_dim();
    if x0.len() != n {
        return Err(SimulationError::InvalidInput(format!(
            "initial state has length {}, expected {n}",
            x0.len()
        )));
    }
    if horizon == 0 {
        return Err(SimulationError::InvalidInput(
            "horizon must be at least 1".into(),
        ));
    }
    if sampler.dimension() != plant.e.cols() {
        return Err(SimulationError::InvalidInput(format!(
            "sampler dimension {} does not match noise matrix columns {}",
            sampler.dimension(),
            plant.e.cols()
        )));
    }
    let gain = match mode {
        ControlMode::None => None,
        ControlMode::Periodic { gain } | ControlMode::EventTriggered { gain, .. } => {
            let b = plant.b.as_ref().ok_or_else(|| {
                SimulationError::InvalidInput(
                    "feedback control requires the plant input matrix".into(),
                )
            })?;
            if gain.cols() != n || gain.rows() != b.cols() {
                return Err(SimulationError::InvalidInput(format!(
                    "gain must be {}x{n}, got {}x{}",
                    b.cols(),
                    gain.rows(),
                    gain.cols()
                )));
            }
            Some(gain)
        }
    };

    let mut stream = sampler.stream_for_run(run);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(if gain.is_some() { horizon } else { 0 });
    let mut held_states = Vec::with_capacity(if gain.is_some() { horizon } else { 0 });
    let mut disturbances = Vec::with_capacity(horizon);
    let mut trigger_times = Vec::new();

    let mut x = x0.to_vec();
    states.push(x.clone());
    let mut held: Option<Vec<f64>> = None;

    for t in 0..horizon {
        let mut drive = vec![0.0; n];
        match mode {
            ControlMode::None => {}
            ControlMode::Periodic { .. } => {
                trigger_times.push(t);
                held = Some(x.clone());
            }
            ControlMode::EventTriggered { policy, .. } => match held {
                None => {
                    // t₀ = 0 always counts as an update
                    trigger_times.push(t);
                    held = Some(x.clone());
                }
                Some(ref h) => {
                    if should_trigger(policy, &x, h)? {
                        trigger_times.push(t);
                        held = Some(x.clone());
                    }
                }
            },
        }
        if let Some(k) = gain {
            let h = held.as_ref().expect("feedback modes always set the held state");
            let u = k.matvec(h);
            let b = plant.b.as_ref().expect("checked above");
            let bu = b.matvec(&u);
            for i in 0..n {
                drive[i] += bu[i];
            }
            inputs.push(u);
            held_states.push(h.clone());
        }
        let w = stream.draw();
        let ew = plant.e.matvec(&w);
        let ax = plant.a.matvec(&x);
        for i in 0..n {
            x[i] = ax[i] + drive[i] + ew[i];
        }
        states.push(x.clone());
        disturbances.push(w);
    }

    Ok(TrajectoryRecord {
        states,
        inputs,
        held_states,
        disturbances,
        trigger_times,
    })
}

/// Control-update statistics across an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct UpdateStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

/// Fraction of runs with `‖x_t‖² > r²`, per step.
#[derive(Debug, Clone, Serialize)]
pub struct ViolationStats {
    pub radius: f64,
    pub fraction_per_step: Vec<f64>,
}

/// Per-time-step risk statistics over a Monte Carlo ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct RiskSummary {
    pub runs: usize,
    pub horizon: usize,
    /// Risk level of the empirical CVaR estimates.
    pub level: f64,
    pub mean_norm_sq: Vec<f64>,
    pub cvar_norm_sq: Vec<f64>,
    /// Standard error of each CVaR estimate.
    pub cvar_stderr: Vec<f64>,
    pub max_norm_sq: Vec<f64>,
    pub updates: UpdateStats,
    pub violation: Option<ViolationStats>,
}

/// Run a seeded ensemble and summarize per-step risk.
///
/// Run `i` draws from stream `i` of the sampler's seed; pass `radius` to also
/// record per-step violation fractions against `r²`. Runs execute in parallel
/// but land in an index-addressed table, so the summary does not depend on
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn ensemble(
    plant: &SimPlant,
    mode: &ControlMode,
    x0: &[f64],
    horizon: usize,
    sampler: &DisturbanceSampler,
    runs: usize,
    level: f64,
    radius: Option<f64>,
) -> Result<RiskSummary, SimulationError> {
    if runs < 2 {
        return Err(SimulationError::InvalidInput(
            "an ensemble needs at least 2 runs".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(SimulationError::InvalidInput(format!(
            "risk level must lie in (0, 1), got {level}"
        )));
    }
    let per_run: Vec<(Vec<f64>, usize)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let record = rollout_stream(plant, mode, x0, horizon, sampler, i as u64)?;
            let norms: Vec<f64> = (0..=horizon).map(|t| record.state_norm_sq(t)).collect();
            Ok((norms, record.update_count()))
        })
        .collect::<Result<_, SimulationError>>()?;

    let mut mean_norm_sq = Vec::with_capacity(horizon + 1);
    let mut cvar_norm_sq = Vec::with_capacity(horizon + 1);
    let mut cvar_stderr = Vec::with_capacity(horizon + 1);
    let mut max_norm_sq = Vec::with_capacity(horizon + 1);
    let mut fraction_per_step = radius.map(|_| Vec::with_capacity(horizon + 1));
    let mut losses = vec![0.0; runs];
    for t in 0..=horizon {
        for (i, (norms, _)) in per_run.iter().enumerate() {
            losses[i] = norms[t];
        }
        mean_norm_sq.push(losses.iter().sum::<f64>() / runs as f64);
        let (cvar, se) = crate::risk::empirical_cvar_with_stderr(&losses, level)
            .expect("non-empty losses and validated level");
        cvar_norm_sq.push(cvar);
        cvar_stderr.push(se);
        max_norm_sq.push(losses.iter().fold(0.0_f64, |m, &v| m.max(v)));
        if let (Some(fractions), Some(r)) = (fraction_per_step.as_mut(), radius) {
            let count = losses.iter().filter(|&&v| v > r * r).count();
            fractions.push(count as f64 / runs as f64);
        }
    }
    let counts: Vec<usize> = per_run.iter().map(|(_, c)| *c).collect();
    let updates = UpdateStats {
        mean: counts.iter().sum::<usize>() as f64 / runs as f64,
        min: counts.iter().copied().min().unwrap_or(0),
        max: counts.iter().copied().max().unwrap_or(0),
    };
    Ok(RiskSummary {
        runs,
        horizon,
        level,
        mean_norm_sq,
        cvar_norm_sq,
        cvar_stderr,
        max_norm_sq,
        updates,
        violation: radius.map(|r| ViolationStats {
            radius: r,
            fraction_per_step: fraction_per_step.unwrap(),
        }),
    })
}

/// State at `t = horizon` from the stacked convolution form
/// `x_t = F_t x₀ + G_t v̄_t + H_t w̄_t` with `F_t = Aᵗ`,
/// `G_t = [A^{t-1}D … D]`, `H_t = [A^{t-1}E … E]`.
///
/// `inputs` must be empty for systems without an input channel and of length
/// `horizon` otherwise; `disturbances` always has length `horizon`. Serves as
/// an independent cross-check of the recursive rollout.
pub fn closed_form_crosscheck(
    sys: &crate::certificates::LinearStochasticSystem,
    x0: &[f64],
    horizon: usize,
    inputs: &[Vec<f64>],
    disturbances: &[Vec<f64>],
) -> Result<Vec<f64>, SimulationError> {
    let n = sys.state_dim();
    if x0.len() != n {
        return Err(SimulationError::InvalidInput(format!(
            "initial state has length {}, expected {n}",
            x0.len()
        )));
    }
    if horizon == 0 {
        return Err(SimulationError::InvalidInput(
            "horizon must be at least 1".into(),
        ));
    }
    if disturbances.len() != horizon {
        return Err(SimulationError::InvalidInput(format!(
            "need {horizon} disturbance vectors, got {}",
            disturbances.len()
        )));
    }
    match sys.input_channel() {
        Some(_) => {
            if inputs.len() != horizon {
                return Err(SimulationError::InvalidInput(format!(
                    "need {horizon} input vectors, got {}",
                    inputs.len()
                )));
            }
        }
        None => {
            if !inputs.is_empty() {
                return Err(SimulationError::InvalidInput(
                    "system has no input channel but inputs were supplied".into(),
                ));
            }
        }
    }

    // powers A^0 .. A^horizon
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(Matrix::identity(n));
    for t in 0..horizon {
        powers.push(sys.a().mul(&powers[t]));
    }

    let mut x = powers[horizon].matvec(x0);
    for k in 0..horizon {
        // block A^{horizon-1-k} applies to the k-th sequence element
        let pow = &powers[horizon - 1 - k];
        if let Some(d) = sys.input_channel() {
            let contribution = pow.mul(d).matvec(&inputs[k]);
            for i in 0..n {
                x[i] += contribution[i];
            }
        }
        let contribution = pow.mul(sys.e()).matvec(&disturbances[k]);
        for i in 0..n {
            x[i] += contribution[i];
        }
    }
    Ok(x)
}

/// Convenience: `‖x‖²` of a state vector.
pub fn norm_sq(state: &[f64]) -> f64 {
    let norm = vec_norm(state);
    norm * norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::LinearStochasticSystem;
    use crate::risk::MomentAmbiguitySet;
    use crate::test_util::TestRng;
    use crate::triggers::ClosedLoopSystem;

    fn paper_plant() -> (SimPlant, Matrix) {
        let a = Matrix::from_rows(&[vec![1.2, 0.3], vec![0.0, 0.5]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -0.5]]).unwrap();
        let k = Matrix::from_rows(&[vec![-0.7, -0.2]]).unwrap();
        (SimPlant::new(a, Some(b), e).unwrap(), k)
    }

    fn paper_sampler(seed: u64) -> DisturbanceSampler {
        let sigma = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.25]]).unwrap();
        DisturbanceSampler::new(SamplerKind::Gaussian, sigma, seed).unwrap()
    }

    #[test]
    fn counter_rng_is_a_pure_function_of_the_counter() {
        let mut a = CounterRng::new(12345);
        let first: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let mut b = CounterRng::new(12345);
        let second: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(first, second);
        // distinct streams differ
        let mut s0 = CounterRng::stream(7, 0);
        let mut s1 = CounterRng::stream(7, 1);
        assert_ne!(s0.next_u64(), s1.next_u64());
    }

    #[test]
    fn nilpotent_open_loop_dies_out() {
        // A² = 0 and no noise: the state is exactly zero from t = 2 on.
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let e = Matrix::zeros(2, 2);
        let plant = SimPlant::new(a, None, e).unwrap();
        let sigma = Matrix::identity(2).scale(1e-30);
        let sampler = DisturbanceSampler::new(SamplerKind::Gaussian, sigma, 1).unwrap();
        let record = rollout(&plant, &ControlMode::None, &[3.0, 4.0], 6, &sampler).unwrap();
        assert_eq!(record.states[1], vec![4.0, 0.0]);
        for t in 2..=6 {
            assert_eq!(record.states[t], vec![0.0, 0.0]);
        }
        assert!(record.trigger_times.is_empty());
        assert!(record.inputs.is_empty());
    }

    #[test]
    fn zero_threshold_triggers_every_step() {
        let (plant, k) = paper_plant();
        let policy = TriggerPolicy::state_error_abs(0.0).unwrap();
        let mode = ControlMode::EventTriggered {
            gain: k.clone(),
            policy,
        };
        let record = rollout(&plant, &mode, &[2.0, 3.0], 60, &paper_sampler(5)).unwrap();
        assert_eq!(record.update_count(), 60);

        let periodic = rollout(
            &plant,
            &ControlMode::Periodic { gain: k },
            &[2.0, 3.0],
            60,
            &paper_sampler(5),
        )
        .unwrap();
        assert_eq!(periodic.update_count(), 60);
        // identical sampler stream and always-fresh held state: same paths
        for t in 0..=60 {
            assert_eq!(record.states[t], periodic.states[t]);
        }
    }

    #[test]
    fn record_satisfies_recursion_and_hold_invariants() {
        let (plant, k) = paper_plant();
        let policy = TriggerPolicy::state_error_abs(1.36).unwrap();
        let mode = ControlMode::EventTriggered {
            gain: k.clone(),
            policy: policy.clone(),
        };
        let record = rollout(&plant, &mode, &[2.0, 3.0], 60, &paper_sampler(42)).unwrap();

        assert_eq!(record.trigger_times[0], 0);
        let a = Matrix::from_rows(&[vec![1.2, 0.3], vec![0.0, 0.5]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -0.5]]).unwrap();
        for t in 0..60 {
            // exact recursion with the recorded inputs and disturbances
            let ax = a.matvec(&record.states[t]);
            let bu = b.matvec(&record.inputs[t]);
            let ew = e.matvec(&record.disturbances[t]);
            for i in 0..2 {
                let expected = ax[i] + bu[i] + ew[i];
                assert!((record.states[t + 1][i] - expected).abs() < 1e-14);
            }
            // held state constant between triggers
            if !record.triggered_at(t) && t > 0 {
                assert_eq!(record.held_states[t], record.held_states[t - 1]);
            }
            // after the update rule, phi never exceeds sigma
            let phi = policy.phi(&record.states[t], &record.held_states[t]).unwrap();
            assert!(phi <= 1.36 + 1e-12, "phi = {phi} at t = {t}");
            // input equals the gain applied to the held state
            let expected_u = k.matvec(&record.held_states[t]);
            assert_eq!(record.inputs[t], expected_u);
        }
    }

    #[test]
    fn rollout_is_deterministic_and_streams_differ() {
        let (plant, k) = paper_plant();
        let mode = ControlMode::Periodic { gain: k };
        let sampler = paper_sampler(1234);
        let one = rollout(&plant, &mode, &[2.0, 3.0], 30, &sampler).unwrap();
        let two = rollout(&plant, &mode, &[2.0, 3.0], 30, &sampler).unwrap();
        assert_eq!(one.states, two.states);
        let other = rollout_stream(&plant, &mode, &[2.0, 3.0], 30, &sampler, 1).unwrap();
        assert_ne!(one.states, other.states);
    }

    #[test]
    fn rollout_validates_inputs() {
        let (plant, k) = paper_plant();
        let sampler = paper_sampler(0);
        assert!(matches!(
            rollout(&plant, &ControlMode::None, &[1.0], 10, &sampler),
            Err(SimulationError::InvalidInput(_))
        ));
        assert!(matches!(
            rollout(&plant, &ControlMode::None, &[1.0, 2.0], 0, &sampler),
            Err(SimulationError::InvalidInput(_))
        ));
        let bad_gain = ControlMode::Periodic {
            gain: Matrix::identity(3),
        };
        assert!(matches!(
            rollout(&plant, &bad_gain, &[1.0, 2.0], 10, &sampler),
            Err(SimulationError::InvalidInput(_))
        ));
        let no_input_plant = SimPlant::new(
            Matrix::identity(2).scale(0.5),
            None,
            Matrix::identity(2),
        )
        .unwrap();
        let sampler2 =
            DisturbanceSampler::new(SamplerKind::Gaussian, Matrix::identity(2), 0).unwrap();
        assert!(matches!(
            rollout(&no_input_plant, &ControlMode::Periodic { gain: k }, &[1.0, 2.0], 10, &sampler2),
            Err(SimulationError::InvalidInput(_))
        ));
    }

    #[test]
    fn sampler_moments_match_configured_covariance() {
        let sigma = Matrix::from_rows(&[vec![0.5, 0.1], vec![0.1, 0.25]]).unwrap();
        let kinds = [
            SamplerKind::Gaussian,
            SamplerKind::StudentT { dof: 5.0 },
            SamplerKind::ScaledUniform,
            SamplerKind::TwoPoint,
        ];
        let count = 200_000;
        for kind in kinds {
            let sampler = DisturbanceSampler::new(kind, sigma.clone(), 99).unwrap();
            let mut stream = sampler.stream_for_run(0);
            let mut mean = [0.0; 2];
            let mut cov = [[0.0; 2]; 2];
            for _ in 0..count {
                let w = stream.draw();
                for (i, wi) in w.iter().enumerate() {
                    mean[i] += wi;
                    for (j, wj) in w.iter().enumerate() {
                        cov[i][j] += wi * wj;
                    }
                }
            }
            let nf = count as f64;
            let mean_tol = 4.0 * (sigma.trace() / nf).sqrt();
            for m in mean {
                assert!(
                    (m / nf).abs() <= mean_tol,
                    "{kind:?}: sample mean {} exceeds {mean_tol}",
                    m / nf
                );
            }
            let mut err = 0.0;
            for (i, row) in cov.iter().enumerate() {
                for (j, entry) in row.iter().enumerate() {
                    let diff = entry / nf - sigma.get(i, j);
                    err += diff * diff;
                }
            }
            let rel = err.sqrt() / sigma.frobenius_norm();
            assert!(rel <= 0.02, "{kind:?}: covariance error {rel}");
        }
    }

    #[test]
    fn ensemble_summary_single_and_multi_thread_identical() {
        let (plant, k) = paper_plant();
        let policy = TriggerPolicy::state_error_abs(1.36).unwrap();
        let mode = ControlMode::EventTriggered { gain: k, policy };
        let sampler = paper_sampler(2024);
        let run = || {
            ensemble(&plant, &mode, &[2.0, 3.0], 20, &sampler, 64, 0.3, Some(6.0)).unwrap()
        };
        let solo = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(
            solo.cvar_norm_sq
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            many.cvar_norm_sq
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
        assert_eq!(solo.updates.mean, many.updates.mean);
        // CVaR dominates the mean at every step
        for t in 0..=20 {
            assert!(solo.cvar_norm_sq[t] >= solo.mean_norm_sq[t] - 1e-12);
        }
    }

    #[test]
    fn ensemble_matches_individual_streams() {
        let (plant, k) = paper_plant();
        let mode = ControlMode::Periodic { gain: k };
        let sampler = paper_sampler(77);
        let summary =
            ensemble(&plant, &mode, &[2.0, 3.0], 10, &sampler, 4, 0.3, None).unwrap();
        // reconstruct the per-step max from individual rollouts
        for t in 0..=10 {
            let max = (0..4)
                .map(|i| {
                    rollout_stream(&plant, &mode, &[2.0, 3.0], 10, &sampler, i)
                        .unwrap()
                        .state_norm_sq(t)
                })
                .fold(0.0_f64, f64::max);
            assert_eq!(summary.max_norm_sq[t], max);
        }
        assert_eq!(summary.updates.mean, 10.0);
        assert_eq!(summary.updates.min, 10);
    }

    #[test]
    fn crosscheck_single_step_and_noise_free() {
        let a = Matrix::from_rows(&[vec![0.5, 0.1], vec![-0.35, 0.4]]).unwrap();
        let d = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -0.5]]).unwrap();
        let set = MomentAmbiguitySet::new(
            Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.25]]).unwrap(),
            0.3,
        )
        .unwrap();
        let sys =
            LinearStochasticSystem::with_bounded_input(a.clone(), d.clone(), e.clone(), set, 1.0)
                .unwrap();

        let x0 = [2.0, 3.0];
        let v0 = vec![0.4];
        let w0 = vec![0.1, -0.2];
        let got =
            closed_form_crosscheck(&sys, &x0, 1, std::slice::from_ref(&v0), std::slice::from_ref(&w0))
                .unwrap();
        let ax = a.matvec(&x0);
        let dv = d.matvec(&v0);
        let ew = e.matvec(&w0);
        for i in 0..2 {
            assert!((got[i] - (ax[i] + dv[i] + ew[i])).abs() < 1e-14);
        }

        // all-zero sequences reduce to A^t x0
        let zeros_v = vec![vec![0.0]; 5];
        let zeros_w = vec![vec![0.0, 0.0]; 5];
        let got = closed_form_crosscheck(&sys, &x0, 5, &zeros_v, &zeros_w).unwrap();
        let mut expected = x0.to_vec();
        for _ in 0..5 {
            expected = a.matvec(&expected);
        }
        for i in 0..2 {
            assert!((got[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn crosscheck_agrees_with_recursion_on_random_instances() {
        let mut rng = TestRng::new(11);
        for _ in 0..20 {
            let n = 3;
            let a = rng.contractive(n, 0.9);
            let d = rng.matrix(n, 2);
            let e = Matrix::identity(n);
            let set = MomentAmbiguitySet::new(Matrix::identity(n), 0.3).unwrap();
            let sys = LinearStochasticSystem::with_bounded_input(
                a.clone(),
                d.clone(),
                e.clone(),
                set,
                1.0,
            )
            .unwrap();
            let x0: Vec<f64> = (0..n).map(|_| rng.next_signed()).collect();
            let horizon = 10;
            let inputs: Vec<Vec<f64>> = (0..horizon)
                .map(|_| (0..2).map(|_| rng.next_signed()).collect())
                .collect();
            let noise: Vec<Vec<f64>> = (0..horizon)
                .map(|_| (0..n).map(|_| rng.next_signed()).collect())
                .collect();

            // independent recursion
            let mut x = x0.clone();
            for t in 0..horizon {
                let ax = a.matvec(&x);
                let dv = d.matvec(&inputs[t]);
                let ew = e.matvec(&noise[t]);
                x = (0..n).map(|i| ax[i] + dv[i] + ew[i]).collect();
            }

            let got = closed_form_crosscheck(&sys, &x0, horizon, &inputs, &noise).unwrap();
            for i in 0..n {
                assert!((got[i] - x[i]).abs() < 1e-10, "mismatch at component {i}");
            }
        }
    }

    #[test]
    fn plant_from_closed_loop() {
        let a = Matrix::from_rows(&[vec![1.2, 0.3], vec![0.0, 0.5]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -0.5]]).unwrap();
        let k = Matrix::from_rows(&[vec![-0.7, -0.2]]).unwrap();
        let sigma = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.25]]).unwrap();
        let set = MomentAmbiguitySet::new(sigma, 0.3).unwrap();
        let cl = ClosedLoopSystem::new(a, b, e, k, set).unwrap();
        let plant = SimPlant::from(&cl);
        assert_eq!(plant.state_dim(), 2);
        let sampler = paper_sampler(3);
        let record = rollout(
            &plant,
            &ControlMode::Periodic {
                gain: cl.gain().clone(),
            },
            &[2.0, 3.0],
            5,
            &sampler,
        )
        .unwrap();
        assert_eq!(record.update_count(), 5);
    }
}

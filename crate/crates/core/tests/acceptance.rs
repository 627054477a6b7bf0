//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success).
//!
//! The criteria pin the reference two-state benchmark (the `paper-example`
//! CLI preset): A = [[1.2, 0.3], [0, 0.5]], B = [1, 0.5]ᵀ, E = [[1, 2],
//! [0.5, -0.5]], K = [-0.7, -0.2], Σ_w = diag(0.5, 0.25), ε = 0.3,
//! x₀ = (2, 3), horizon 60.

use std::time::Instant;

use cvarcert::certificates::{
    invariance_certificate, invariance_certificate_general_alpha,
    robust_ultimate_bound_certificate, stability_envelope, LinearStochasticSystem,
};
use cvarcert::linalg::{solve_discrete_lyapunov, Matrix};
use cvarcert::risk::{coherence_check, empirical_cvar, MomentAmbiguitySet, QuadraticLoss};
use cvarcert::simulation::{
    closed_form_crosscheck, ensemble, rollout_stream, ControlMode, DisturbanceSampler, SamplerKind,
    SimPlant,
};
use cvarcert::triggers::{
    sigma1_max, sigma2_max, sigma3_max, sigma4_max, ClosedLoopSystem, TriggerKind, TriggerPolicy,
};

const EPSILON: f64 = 0.3;
const X0: [f64; 2] = [2.0, 3.0];
const HORIZON: usize = 60;

fn reference_loop() -> ClosedLoopSystem {
    let a = Matrix::from_rows(&[vec![1.2, 0.3], vec![0.0, 0.5]]).unwrap();
    let b = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
    let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -0.5]]).unwrap();
    let k = Matrix::from_rows(&[vec![-0.7, -0.2]]).unwrap();
    let sigma = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.25]]).unwrap();
    let set = MomentAmbiguitySet::new(sigma, EPSILON).unwrap();
    ClosedLoopSystem::new(a, b, e, k, set).unwrap()
}

fn reference_sampler(kind: SamplerKind, seed: u64) -> DisturbanceSampler {
    let sigma = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.25]]).unwrap();
    DisturbanceSampler::new(kind, sigma, seed).unwrap()
}

/// xorshift64* used only to generate random test instances.
struct Rng(u64);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(seed.max(1))
    }

    fn next_f64(&mut self) -> f64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        (x.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn signed(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| self.signed()).collect()).unwrap()
    }

    fn contractive(&mut self, n: usize, target: f64) -> Matrix {
        let raw = self.matrix(n, n);
        let norm = raw.spectral_norm();
        if norm == 0.0 {
            raw
        } else {
            raw.scale(target / norm)
        }
    }
}

fn report(criterion: &str, ok: bool, elapsed_s: f64, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({elapsed_s:.2}s) {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

#[test]
fn criterion_1_reference_value_regression() {
    let start = Instant::now();
    let cl = reference_loop();

    let sqrt_ub = (cl.lyapunov_trace() / EPSILON).sqrt();
    let s1 = sigma1_max(&cl, 6.0).unwrap();
    let s2 = sigma2_max(&cl, 6.0).unwrap();
    let sqrt_inv = invariance_certificate(&cl.as_autonomous(), 10.0)
        .unwrap()
        .threshold_value
        .sqrt();
    let s3 = sigma3_max(&cl, 10.0).unwrap();
    let s4 = sigma4_max(&cl, 10.0).unwrap();

    let expected = [
        ("sqrt((1/eps)Tr(P))", sqrt_ub, 2.94),
        ("sigma1(r=6)", s1, 1.36),
        ("sigma2(r=6)", s2, 0.99),
        ("sqrt(invariance threshold)", sqrt_inv, 6.54),
        ("sigma3(r=10)", s3, 1.52),
        ("sigma4(r=10)", s4, 1.11),
    ];
    let mut ok = true;
    let mut detail = String::new();
    for (name, got, want) in expected {
        let inside = (got - want).abs() <= 0.01;
        ok &= inside;
        if !inside {
            detail.push_str(&format!("{name} = {got:.4}, expected {want} +/- 0.01; "));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 1.0;
    report("1 (reference-value regression)", ok, elapsed, &detail);
    assert!(
        ok,
        "reference values out of tolerance: {detail}\n\
         note: sigma3 evaluates its synthesis formula exactly; with these \
         matrices the right side is 1.5368, which is not within 0.01 of the \
         published 1.52 (the other five values agree)."
    );
}

#[test]
fn criterion_2_lyapunov_correctness() {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let mut ok = true;
    let mut detail = String::new();
    for trial in 0..100 {
        let n = 1 + trial % 6;
        let target = 0.05 + 0.9 * rng.next_f64();
        let a = rng.contractive(n, target);
        let half = rng.matrix(n, n);
        let q = half.mul(&half.transpose());

        let p = solve_discrete_lyapunov(&a, &q).unwrap();
        let residual = a.mul(&p).mul(&a.transpose()).sub(&p).add(&q).spectral_norm();
        if residual > 1e-8 * (1.0 + q.spectral_norm()) {
            ok = false;
            detail = format!("trial {trial}: residual {residual:.3e}");
            break;
        }

        // truncated series oracle
        let mut series = Matrix::zeros(n, n);
        let mut ak = Matrix::identity(n);
        for _ in 0..=200 {
            series = series.add(&ak.mul(&q).mul(&ak.transpose()));
            ak = ak.mul(&a);
        }
        let diff = p.sub(&series).max_abs();
        if diff > 1e-8 {
            ok = false;
            detail = format!("trial {trial}: series mismatch {diff:.3e}");
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 5.0;
    report("2 (Lyapunov correctness)", ok, elapsed, &detail);
    assert!(ok, "{detail}");
}

/// Independent empirical-CVaR oracle: brute-force the dual objective on a
/// dense β grid augmented with the samples themselves.
fn brute_force_cvar(samples: &[f64], level: f64) -> f64 {
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut candidates: Vec<f64> = (0..=4000).map(|i| lo + (hi - lo) * i as f64 / 4000.0).collect();
    candidates.extend_from_slice(samples);
    let n = samples.len() as f64;
    candidates
        .into_iter()
        .map(|beta| {
            let tail: f64 = samples.iter().map(|&s| (s - beta).max(0.0)).sum();
            beta + tail / (level * n)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_3_risk_measure_properties() {
    let start = Instant::now();
    let mut rng = Rng::new(7777);
    let mut ok = true;
    let mut detail = String::new();

    for trial in 0..1000 {
        let half = rng.matrix(3, 3);
        let sigma = half.mul(&half.transpose()).add(&Matrix::identity(3).scale(0.05));
        let set = MomentAmbiguitySet::new(sigma, 0.02 + 0.96 * rng.next_f64()).unwrap();
        let l1 = QuadraticLoss::pure(rng.matrix(3, 3));
        let l2 = QuadraticLoss::pure(rng.matrix(3, 3));
        let scale = 0.05 + 10.0 * rng.next_f64();
        let shift = 20.0 * rng.signed();
        let coherent = coherence_check(&set, &l1, &l2, scale, shift).unwrap();
        if !coherent.all_hold() {
            ok = false;
            detail = format!("trial {trial}: coherence violated {coherent:?}");
            break;
        }
    }

    if ok {
        for trial in 0..1000 {
            let len = 1 + (rng.next_f64() * 50.0) as usize;
            let samples: Vec<f64> = (0..len).map(|_| 100.0 * rng.signed()).collect();
            let level = 0.02 + 0.96 * rng.next_f64();
            let fast = empirical_cvar(&samples, level).unwrap();
            let brute = brute_force_cvar(&samples, level);
            if (fast - brute).abs() > 1e-9 {
                ok = false;
                detail = format!("trial {trial}: estimator {fast} vs brute force {brute}");
                break;
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 10.0;
    report("3 (risk-measure properties)", ok, elapsed, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_4_certificate_soundness_statistical() {
    let start = Instant::now();
    let cl = reference_loop();
    let sigma1 = sigma1_max(&cl, 6.0).unwrap();
    let policy = TriggerPolicy::state_error_abs(sigma1).unwrap();
    let mode = ControlMode::EventTriggered {
        gain: cl.gain().clone(),
        policy,
    };
    let plant = SimPlant::from(&cl);

    // Envelope for the error-driven loop: channel BK with bound sigma1, at
    // alpha1 = 1 and the robust alpha2 recorded by the certificate.
    let error_sys = cl.as_error_driven(TriggerKind::StateErrorAbs, sigma1);
    let alpha2 = robust_ultimate_bound_certificate(&error_sys, 6.0)
        .unwrap()
        .alpha2
        .expect("non-degenerate channel");
    let envelope = stability_envelope(&error_sys, 1.0, Some(alpha2)).unwrap();
    let x0_energy: f64 = X0.iter().map(|v| v * v).sum();

    let kinds = [
        SamplerKind::Gaussian,
        SamplerKind::StudentT { dof: 5.0 },
        SamplerKind::ScaledUniform,
        SamplerKind::TwoPoint,
    ];
    let mut ok = true;
    let mut detail = String::new();
    'outer: for kind in kinds {
        let sampler = reference_sampler(kind, 424242);
        let summary = ensemble(&plant, &mode, &X0, HORIZON, &sampler, 1000, EPSILON, Some(6.0))
            .expect("ensemble");
        for t in 0..=HORIZON {
            let cvar = summary.cvar_norm_sq[t];
            let margin = 3.0 * summary.cvar_stderr[t];
            let bound = envelope.value_at(x0_energy, sigma1 * sigma1, t as u32);
            if cvar > bound + margin {
                ok = false;
                detail = format!("{kind:?}: CVaR {cvar:.2} above envelope {bound:.2} at t = {t}");
                break 'outer;
            }
            if t >= 20 && cvar > 36.0 + margin {
                ok = false;
                detail = format!("{kind:?}: CVaR {cvar:.2} above r^2 = 36 at t = {t}");
                break 'outer;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 60.0;
    report("4 (certificate soundness, statistical)", ok, elapsed, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_5_update_count_reproduction() {
    let start = Instant::now();
    let cl = reference_loop();
    let plant = SimPlant::from(&cl);
    let gain = cl.gain().clone();
    let sampler = reference_sampler(SamplerKind::Gaussian, 31337);

    let cases: [(&str, TriggerPolicy, (f64, f64)); 4] = [
        (
            "sigma1=1.36",
            TriggerPolicy::state_error_abs(1.36).unwrap(),
            (20.0, 35.0),
        ),
        (
            "sigma2=0.99",
            TriggerPolicy::input_error_abs(0.99, gain.clone()).unwrap(),
            (20.0, 35.0),
        ),
        (
            "sigma3=1.52",
            TriggerPolicy::state_error_abs(1.52).unwrap(),
            (18.0, 33.0),
        ),
        (
            "sigma4=1.11",
            TriggerPolicy::input_error_abs(1.11, gain.clone()).unwrap(),
            (18.0, 33.0),
        ),
    ];

    let mut ok = true;
    let mut detail = String::new();
    for (label, policy, (lo, hi)) in cases {
        let mode = ControlMode::EventTriggered {
            gain: gain.clone(),
            policy,
        };
        let summary =
            ensemble(&plant, &mode, &X0, HORIZON, &sampler, 500, EPSILON, None).unwrap();
        let mean = summary.updates.mean;
        detail.push_str(&format!("{label}: mean {mean:.1}; "));
        if !(lo..=hi).contains(&mean) {
            ok = false;
            detail.push_str(&format!("OUTSIDE [{lo}, {hi}]; "));
        }
        if mean > 0.6 * HORIZON as f64 {
            ok = false;
            detail.push_str("no 50% reduction; ");
        }
    }

    let periodic = ensemble(
        &plant,
        &ControlMode::Periodic { gain },
        &X0,
        HORIZON,
        &sampler,
        500,
        EPSILON,
        None,
    )
    .unwrap();
    if periodic.updates.mean != 60.0 || periodic.updates.min != 60 || periodic.updates.max != 60 {
        ok = false;
        detail.push_str("periodic baseline not exactly 60; ");
    }

    let elapsed = start.elapsed().as_secs_f64();
    report("5 (update-count reproduction)", ok, elapsed, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_6_optimal_alpha_property() {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = String::new();

    let mut systems = vec![reference_loop().as_autonomous()];
    let mut rng = Rng::new(606);
    for _ in 0..5 {
        let n = 2 + (rng.next_f64() * 3.0) as usize;
        let target = 0.1 + 0.85 * rng.next_f64();
        let a = rng.contractive(n, target);
        let half = rng.matrix(n, n);
        let sigma = half.mul(&half.transpose()).add(&Matrix::identity(n).scale(0.1));
        let set = MomentAmbiguitySet::new(sigma, 0.1 + 0.8 * rng.next_f64()).unwrap();
        systems.push(
            LinearStochasticSystem::autonomous(a, Matrix::identity(n), set).unwrap(),
        );
    }

    'outer: for (idx, sys) in systems.iter().enumerate() {
        let canonical = invariance_certificate(sys, 1.0).unwrap().threshold_value;
        let mut best = f64::INFINITY;
        for k in 0..10_000 {
            let alpha = 10f64.powf(-4.0 + 8.0 * k as f64 / 9999.0);
            if let Ok(cert) = invariance_certificate_general_alpha(sys, 1.0, alpha) {
                best = best.min(cert.threshold_value);
            }
        }
        // the grid may never beat the canonical threshold by more than 1e-6 rel.
        if best < canonical * (1.0 - 1e-6) {
            ok = false;
            detail = format!("system {idx}: grid best {best} beats canonical {canonical}");
            break 'outer;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 5.0;
    report("6 (optimal-alpha property)", ok, elapsed, &detail);
    assert!(ok, "{detail}");
}

#[test]
fn criterion_7_self_consistency() {
    let start = Instant::now();
    let mut rng = Rng::new(70707);
    let mut ok = true;
    let mut detail = String::new();

    // stacked convolution form vs recursive rollout, with and without inputs
    for trial in 0..100 {
        let n = 1 + trial % 4;
        let target = 0.1 + 0.8 * rng.next_f64();
        let a = rng.contractive(n, target);
        let e = Matrix::identity(n);
        let set = MomentAmbiguitySet::new(Matrix::identity(n), EPSILON).unwrap();
        let with_input = trial % 2 == 0;
        let horizon = 1 + (rng.next_f64() * 12.0) as usize;
        let x0: Vec<f64> = (0..n).map(|_| 3.0 * rng.signed()).collect();
        let noise: Vec<Vec<f64>> = (0..horizon)
            .map(|_| (0..n).map(|_| rng.signed()).collect())
            .collect();

        let (sys, inputs) = if with_input {
            let d = rng.matrix(n, 2);
            let inputs: Vec<Vec<f64>> = (0..horizon)
                .map(|_| (0..2).map(|_| rng.signed()).collect())
                .collect();
            (
                LinearStochasticSystem::with_bounded_input(a.clone(), d, e.clone(), set, 10.0)
                    .unwrap(),
                inputs,
            )
        } else {
            (
                LinearStochasticSystem::autonomous(a.clone(), e.clone(), set).unwrap(),
                Vec::new(),
            )
        };

        // independent recursion
        let mut x = x0.clone();
        for t in 0..horizon {
            let ax = a.matvec(&x);
            let mut next = ax;
            if with_input {
                let dv = sys.input_channel().unwrap().matvec(&inputs[t]);
                for i in 0..n {
                    next[i] += dv[i];
                }
            }
            for i in 0..n {
                next[i] += noise[t][i];
            }
            x = next;
        }

        let stacked = closed_form_crosscheck(&sys, &x0, horizon, &inputs, &noise).unwrap();
        for i in 0..n {
            if (stacked[i] - x[i]).abs() > 1e-10 {
                ok = false;
                detail = format!("trial {trial}: stacked form deviates by {:.3e}", (stacked[i] - x[i]).abs());
            }
        }
    }

    // bit-identical ensembles across thread counts, and rollouts reproducible
    if ok {
        let cl = reference_loop();
        let plant = SimPlant::from(&cl);
        let policy = TriggerPolicy::state_error_abs(1.36).unwrap();
        let mode = ControlMode::EventTriggered {
            gain: cl.gain().clone(),
            policy,
        };
        let sampler = reference_sampler(SamplerKind::Gaussian, 5150);
        let run =
            || ensemble(&plant, &mode, &X0, HORIZON, &sampler, 200, EPSILON, Some(6.0)).unwrap();
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
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(&solo.cvar_norm_sq) != bits(&many.cvar_norm_sq)
            || bits(&solo.mean_norm_sq) != bits(&many.mean_norm_sq)
            || bits(&solo.max_norm_sq) != bits(&many.max_norm_sq)
            || solo.updates.mean.to_bits() != many.updates.mean.to_bits()
        {
            ok = false;
            detail.push_str("1- and 8-way ensembles differ; ");
        }
        let one = rollout_stream(&plant, &mode, &X0, HORIZON, &sampler, 3).unwrap();
        let two = rollout_stream(&plant, &mode, &X0, HORIZON, &sampler, 3).unwrap();
        if one.states != two.states {
            ok = false;
            detail.push_str("repeated rollout not bit-identical; ");
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    report("7 (self-consistency)", ok, elapsed, &detail);
    assert!(ok, "{detail}");
}

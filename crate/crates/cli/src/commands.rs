//! The certify / simulate / sweep subcommands.

use crate::config::{Experiment, TriggerSpec};
use crate::report::{
    write_json, write_sweep_csv, write_trajectory_csv, CertificateSet, CertifyReport,
    SigmaEntry, SigmaReport, SimulateSummary, SweepRow, SystemReport,
};
use crate::CliError;
use cvarcert::certificates::{
    invariance_certificate, robust_invariance_certificate, robust_ultimate_bound_certificate,
    ultimate_bound_certificate,
};
use cvarcert::simulation::{ensemble, rollout, ControlMode, RiskSummary};
use cvarcert::triggers::{sigma1_max, sigma2_max, sigma3_max, sigma4_max, TriggerKind};
use std::path::Path;

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::InvalidConfig(e.to_string())
}

/// Assemble the full certificate report at the experiment's radius.
pub fn certify_report(exp: &Experiment) -> Result<CertifyReport, CliError> {
    let cl = &exp.closed_loop;
    let r = exp.config.radius;
    let auto = cl.as_autonomous();

    let ultimate = ultimate_bound_certificate(&auto, r).map_err(internal)?;
    let invariance = invariance_certificate(&auto, r).map_err(internal)?;

    let sigma1 = SigmaEntry::from_result(sigma1_max(cl, r));
    let sigma2 = SigmaEntry::from_result(sigma2_max(cl, r));
    let sigma3 = SigmaEntry::from_result(sigma3_max(cl, r));
    let sigma4 = SigmaEntry::from_result(sigma4_max(cl, r));

    // Robust verdicts close the loop on the synthesized thresholds: the held
    // state error is an input with channel BK bounded by sigma.
    let robust_ultimate_bound = sigma1
        .value()
        .map(|s| {
            robust_ultimate_bound_certificate(&cl.as_error_driven(TriggerKind::StateErrorAbs, s), r)
        })
        .transpose()
        .map_err(internal)?;
    let robust_invariance = sigma3
        .value()
        .map(|s| {
            robust_invariance_certificate(&cl.as_error_driven(TriggerKind::StateErrorAbs, s), r)
        })
        .transpose()
        .map_err(internal)?;

    Ok(CertifyReport {
        system: SystemReport {
            closed_loop_norm: cl.closed_loop_norm(),
            trace_p: cl.lyapunov_trace(),
            sqrt_ultimate_threshold: ultimate.threshold_value.sqrt(),
            sqrt_invariance_threshold: invariance.threshold_value.sqrt(),
            noise_energy: auto.noise_energy(),
            epsilon: exp.config.epsilon,
            radius: r,
        },
        certificates: CertificateSet {
            ultimate_bound: ultimate,
            invariance,
            robust_ultimate_bound,
            robust_invariance,
        },
        trigger_thresholds: SigmaReport {
            sigma1,
            sigma2,
            sigma3,
            sigma4,
        },
    })
}

/// `certify`: write `report.json` and print the table. The report is written
/// even when the configured trigger cannot be synthesized at this radius; in
/// that case the command still fails with the infeasible-radius code so
/// pipelines notice.
pub fn cmd_certify(exp: &Experiment, out_dir: &Path) -> Result<CertifyReport, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let report = certify_report(exp)?;
    write_json(&out_dir.join("report.json"), &report)?;
    println!("{}", report.human_table());
    println!("wrote {}", out_dir.join("report.json").display());
    exp.resolve_policy(exp.config.radius)?;
    Ok(report)
}

/// `simulate`: one seeded trajectory CSV plus an ensemble summary, with an
/// optional periodic baseline.
pub fn cmd_simulate(exp: &Experiment, out_dir: &Path) -> Result<SimulateSummary, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let config = &exp.config;
    let (policy, sigma) = exp.resolve_policy(config.radius)?;
    let gain = exp.closed_loop.gain().clone();
    let mode = ControlMode::EventTriggered {
        gain: gain.clone(),
        policy,
    };

    let record = rollout(&exp.plant, &mode, &config.x0, config.horizon, &exp.sampler)
        .map_err(internal)?;
    let state_dim = exp.closed_loop.state_dim();
    let input_dim = exp.closed_loop.gain().rows();
    let trajectory_name = format!("trajectory_{}.csv", config.seed);
    write_trajectory_csv(&out_dir.join(&trajectory_name), &record, state_dim, input_dim)?;
    let mut trajectory_files = vec![trajectory_name];

    let event_triggered = run_ensemble(exp, &mode)?;

    let periodic_baseline = if config.baseline_periodic {
        let mode = ControlMode::Periodic { gain };
        let record = rollout(&exp.plant, &mode, &config.x0, config.horizon, &exp.sampler)
            .map_err(internal)?;
        let name = format!("trajectory_{}_periodic.csv", config.seed);
        write_trajectory_csv(&out_dir.join(&name), &record, state_dim, input_dim)?;
        trajectory_files.push(name);
        Some(run_ensemble(exp, &mode)?)
    } else {
        None
    };

    let summary = SimulateSummary {
        certify: certify_report(exp)?,
        trigger_sigma: sigma,
        trajectory_files,
        event_triggered,
        periodic_baseline,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    println!(
        "mean control updates over {} runs: {:.2} / {}",
        config.runs, summary.event_triggered.updates.mean, config.horizon
    );
    println!("wrote {}", out_dir.join("summary.json").display());
    Ok(summary)
}

fn run_ensemble(exp: &Experiment, mode: &ControlMode) -> Result<RiskSummary, CliError> {
    ensemble(
        &exp.plant,
        mode,
        &exp.config.x0,
        exp.config.horizon,
        &exp.sampler,
        exp.config.runs,
        exp.config.epsilon,
        Some(exp.config.radius),
    )
    .map_err(internal)
}

/// Which quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Radius,
    Epsilon,
    Sigma,
}

impl std::str::FromStr for SweepParameter {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "r" | "radius" => Ok(SweepParameter::Radius),
            "epsilon" => Ok(SweepParameter::Epsilon),
            "sigma" => Ok(SweepParameter::Sigma),
            other => Err(CliError::InvalidConfig(format!(
                "unknown sweep parameter {other:?}; expected r|epsilon|sigma"
            ))),
        }
    }
}

/// Parse `v1,v2,...` or `start:end:count` into grid values.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| CliError::InvalidConfig(msg);
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("grid {text:?} is not start:end:count")));
        }
        let start: f64 = parts[0]
            .parse()
            .map_err(|_| bad(format!("bad grid start {:?}", parts[0])))?;
        let end: f64 = parts[1]
            .parse()
            .map_err(|_| bad(format!("bad grid end {:?}", parts[1])))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| bad(format!("bad grid count {:?}", parts[2])))?;
        if count == 0 {
            return Err(bad("grid count must be positive".into()));
        }
        if count == 1 {
            vec![start]
        } else {
            (0..count)
                .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
                .collect()
        }
    } else {
        text.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad grid value {v:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(bad("grid must not be empty".into()));
    }
    Ok(values)
}

/// `sweep`: one row per grid point, each combining synthesized thresholds
/// with ensemble statistics at that point. Infeasible points keep their
/// threshold columns and leave the simulation cells empty.
pub fn cmd_sweep(
    exp: &Experiment,
    parameter: SweepParameter,
    grid: &[f64],
    out_dir: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        rows.push(sweep_point(exp, parameter, value)?);
    }
    write_sweep_csv(&out_dir.join("sweep.csv"), &rows)?;
    println!("wrote {} ({} rows)", out_dir.join("sweep.csv").display(), rows.len());
    Ok(rows)
}

fn sweep_point(
    exp: &Experiment,
    parameter: SweepParameter,
    value: f64,
) -> Result<SweepRow, CliError> {
    let name = match parameter {
        SweepParameter::Radius => "r",
        SweepParameter::Epsilon => "epsilon",
        SweepParameter::Sigma => "sigma",
    };

    // Re-validate the experiment when the point changes the ambiguity set.
    let rebuilt;
    let exp = match parameter {
        SweepParameter::Epsilon => {
            if !(value > 0.0 && value < 1.0) {
                return Err(CliError::InvalidConfig(format!(
                    "epsilon grid value {value} outside (0, 1)"
                )));
            }
            let mut config = exp.config.clone();
            config.epsilon = value;
            rebuilt = config.build()?;
            &rebuilt
        }
        SweepParameter::Radius => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::InvalidConfig(format!(
                    "radius grid value {value} must be positive"
                )));
            }
            exp
        }
        SweepParameter::Sigma => {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CliError::InvalidConfig(format!(
                    "sigma grid value {value} must be nonnegative"
                )));
            }
            exp
        }
    };

    let radius = match parameter {
        SweepParameter::Radius => value,
        _ => exp.config.radius,
    };
    let cl = &exp.closed_loop;
    let auto = cl.as_autonomous();
    let sqrt_ultimate = ultimate_bound_certificate(&auto, radius)
        .map_err(internal)?
        .threshold_value
        .sqrt();
    let sqrt_invariance = invariance_certificate(&auto, radius)
        .map_err(internal)?
        .threshold_value
        .sqrt();
    let sigma_max = [
        sigma1_max(cl, radius).ok(),
        sigma2_max(cl, radius).ok(),
        sigma3_max(cl, radius).ok(),
        sigma4_max(cl, radius).ok(),
    ];

    // the simulated policy: sweep sigma overrides the threshold, keeping the
    // configured trigger's error kind
    let policy = match parameter {
        SweepParameter::Sigma => {
            let kind = match exp.config.trigger.parse()? {
                TriggerSpec::Corollary(1) | TriggerSpec::Corollary(3) => TriggerKind::StateErrorAbs,
                TriggerSpec::Corollary(2) | TriggerSpec::Corollary(4) => TriggerKind::InputErrorAbs,
                TriggerSpec::Corollary(_) => unreachable!("validated in parse"),
                TriggerSpec::Explicit { kind, .. } => kind,
            };
            Some(
                exp.policy_for_spec(TriggerSpec::Explicit { sigma: value, kind }, radius)?
                    .0,
            )
        }
        _ => match exp.resolve_policy(radius) {
            Ok((policy, _)) => Some(policy),
            Err(CliError::Infeasible(_)) => None,
            Err(e) => return Err(e),
        },
    };

    let (mean_updates, cvar_final, cvar_tail_max) = match policy {
        Some(policy) => {
            let mode = ControlMode::EventTriggered {
                gain: cl.gain().clone(),
                policy,
            };
            let summary = run_ensemble(exp, &mode)?;
            let tail_start = exp.config.horizon / 2;
            let tail_max = summary.cvar_norm_sq[tail_start..]
                .iter()
                .fold(0.0_f64, |m, &v| m.max(v));
            (
                Some(summary.updates.mean),
                Some(*summary.cvar_norm_sq.last().unwrap()),
                Some(tail_max),
            )
        }
        None => (None, None, None),
    };

    Ok(SweepRow {
        parameter: name.to_string(),
        value,
        sqrt_ultimate_threshold: sqrt_ultimate,
        sqrt_invariance_threshold: sqrt_invariance,
        sigma_max,
        mean_updates,
        cvar_final,
        cvar_tail_max,
    })
}

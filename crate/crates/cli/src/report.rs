//! Report structures and file writers. All numbers come from upstream
//! operations; this module only arranges and formats them.

use crate::CliError;
use cvarcert::certificates::RiskCertificate;
use cvarcert::simulation::{RiskSummary, TrajectoryRecord};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// System-level quantities echoed in every report.
#[derive(Debug, Clone, Serialize)]
pub struct SystemReport {
    pub closed_loop_norm: f64,
    pub trace_p: f64,
    /// `√((1/ε)·Tr(P))` — the square-rooted ultimate-bound threshold.
    pub sqrt_ultimate_threshold: f64,
    /// `√(Tr(Σ_w EᵀE)/(ε(1−‖A+BK‖)²))` — square-rooted invariance threshold.
    pub sqrt_invariance_threshold: f64,
    pub noise_energy: f64,
    pub epsilon: f64,
    pub radius: f64,
}

/// A synthesized maximal trigger threshold, or why it does not exist.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum SigmaEntry {
    Feasible { max: f64 },
    Infeasible { infeasible_radius: String },
}

impl SigmaEntry {
    pub fn from_result(result: Result<f64, cvarcert::triggers::TriggerError>) -> Self {
        match result {
            Ok(max) => SigmaEntry::Feasible { max },
            Err(e) => SigmaEntry::Infeasible {
                infeasible_radius: e.to_string(),
            },
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            SigmaEntry::Feasible { max } => Some(*max),
            SigmaEntry::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub sigma1: SigmaEntry,
    pub sigma2: SigmaEntry,
    pub sigma3: SigmaEntry,
    pub sigma4: SigmaEntry,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateSet {
    pub ultimate_bound: RiskCertificate,
    pub invariance: RiskCertificate,
    /// Evaluated with the state-error channel `BK` at `d = sigma1_max`;
    /// absent when sigma1 is infeasible at this radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_ultimate_bound: Option<RiskCertificate>,
    /// Evaluated with channel `BK` at `d = sigma3_max`; absent when sigma3
    /// is infeasible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_invariance: Option<RiskCertificate>,
}

/// `report.json` payload for the certify command.
#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub system: SystemReport,
    pub certificates: CertificateSet,
    pub trigger_thresholds: SigmaReport,
}

impl CertifyReport {
    pub fn human_table(&self) -> String {
        let mut out = String::new();
        let s = &self.system;
        out.push_str(&format!(
            "closed-loop norm          {:.6}\n\
             Tr(P)                     {:.6}\n\
             sqrt ultimate threshold   {:.6}\n\
             sqrt invariance threshold {:.6}\n\
             radius r                  {:.6}\n",
            s.closed_loop_norm, s.trace_p, s.sqrt_ultimate_threshold, s.sqrt_invariance_threshold, s.radius
        ));
        let verdict = |c: &RiskCertificate| if c.satisfied { "satisfied" } else { "NOT satisfied" };
        out.push_str(&format!(
            "ultimate bound            {} (margin {:.4})\n\
             invariance                {} (margin {:.4})\n",
            verdict(&self.certificates.ultimate_bound),
            self.certificates.ultimate_bound.margin,
            verdict(&self.certificates.invariance),
            self.certificates.invariance.margin,
        ));
        let sigma = |label: &str, entry: &SigmaEntry| match entry {
            SigmaEntry::Feasible { max } => format!("{label}  {max:.4}\n"),
            SigmaEntry::Infeasible { .. } => format!("{label}  infeasible at this radius\n"),
        };
        out.push_str(&sigma("sigma1 max (ultimate, ||e||) ", &self.trigger_thresholds.sigma1));
        out.push_str(&sigma("sigma2 max (ultimate, ||Ke||)", &self.trigger_thresholds.sigma2));
        out.push_str(&sigma("sigma3 max (invariant, ||e||)", &self.trigger_thresholds.sigma3));
        out.push_str(&sigma("sigma4 max (invariant, ||Ke||)", &self.trigger_thresholds.sigma4));
        out
    }
}

/// `summary.json` payload for the simulate command.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub certify: CertifyReport,
    pub trigger_sigma: f64,
    pub trajectory_files: Vec<String>,
    pub event_triggered: RiskSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodic_baseline: Option<RiskSummary>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text).map_err(|e| {
        CliError::Io(format!("write {}: {e}", path.display()))
    })
}

/// Trajectory CSV with the fixed column order
/// `t, x1..xn, u1..um, norm_sq, trigger`.
///
/// The final row reports the terminal state with empty input cells (inputs
/// exist only for steps that were integrated).
pub fn write_trajectory_csv(
    path: &Path,
    record: &TrajectoryRecord,
    state_dim: usize,
    input_dim: usize,
) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("create {}: {e}", path.display())))?;
    let mut header = String::from("t");
    for i in 1..=state_dim {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=input_dim {
        header.push_str(&format!(",u{i}"));
    }
    header.push_str(",norm_sq,trigger");
    writeln!(file, "{header}").map_err(CliError::from)?;

    for t in 0..record.states.len() {
        let mut row = format!("{t}");
        for v in &record.states[t] {
            row.push_str(&format!(",{v}"));
        }
        for i in 0..input_dim {
            match record.inputs.get(t) {
                Some(u) => row.push_str(&format!(",{}", u[i])),
                None => row.push(','),
            }
        }
        row.push_str(&format!(",{}", record.state_norm_sq(t)));
        let fired = t < record.states.len() - 1 && record.triggered_at(t);
        row.push_str(if fired { ",1" } else { ",0" });
        writeln!(file, "{row}").map_err(CliError::from)?;
    }
    Ok(())
}

/// One row of `sweep.csv`; optional cells are left empty when the grid point
/// is infeasible for the configured trigger.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub sqrt_ultimate_threshold: f64,
    pub sqrt_invariance_threshold: f64,
    pub sigma_max: [Option<f64>; 4],
    pub mean_updates: Option<f64>,
    pub cvar_final: Option<f64>,
    pub cvar_tail_max: Option<f64>,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("create {}: {e}", path.display())))?;
    writeln!(
        file,
        "parameter,value,sqrt_ultimate_threshold,sqrt_invariance_threshold,\
         sigma1_max,sigma2_max,sigma3_max,sigma4_max,mean_updates,cvar_final,cvar_tail_max"
    )
    .map_err(CliError::from)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.parameter,
            row.value,
            row.sqrt_ultimate_threshold,
            row.sqrt_invariance_threshold,
            opt(row.sigma_max[0]),
            opt(row.sigma_max[1]),
            opt(row.sigma_max[2]),
            opt(row.sigma_max[3]),
            opt(row.mean_updates),
            opt(row.cvar_final),
            opt(row.cvar_tail_max),
        )
        .map_err(CliError::from)?;
    }
    Ok(())
}

//! Experiment configuration: a single TOML file (or the built-in preset)
//! holding the system matrices, risk level, radius, trigger choice, sampler,
//! and run parameters. Matrices are written as row lists so configs diff
//! cleanly.

use crate::CliError;
use cvarcert::linalg::Matrix;
use cvarcert::risk::MomentAmbiguitySet;
use cvarcert::simulation::{DisturbanceSampler, SamplerKind, SimPlant};
use cvarcert::triggers::{
    sigma1_max, sigma2_max, sigma3_max, sigma4_max, ClosedLoopSystem, TriggerKind, TriggerPolicy,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub radius: f64,
    pub trigger: TriggerConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub baseline_periodic: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub sigma_w: Vec<Vec<f64>>,
}

/// Either a corollary number (threshold synthesized at its maximum) or an
/// explicit sigma with a trigger kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corollary: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
}

/// The bundled two-state reference example: an unstable plant stabilized by
/// a static gain, driven through a mixing noise matrix.
pub fn paper_example() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemConfig {
            a: vec![vec![1.2, 0.3], vec![0.0, 0.5]],
            b: vec![vec![1.0], vec![0.5]],
            e: vec![vec![1.0, 2.0], vec![0.5, -0.5]],
            k: vec![vec![-0.7, -0.2]],
            sigma_w: vec![vec![0.5, 0.0], vec![0.0, 0.25]],
        },
        epsilon: 0.3,
        x0: vec![2.0, 3.0],
        horizon: 60,
        runs: 500,
        seed: 42,
        radius: 6.0,
        trigger: TriggerConfig {
            corollary: Some(1),
            sigma: None,
            kind: None,
        },
        sampler: SamplerConfig {
            kind: "gaussian".into(),
            dof: None,
        },
        baseline_periodic: false,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::InvalidConfig(format!("config parse: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    /// Validate everything upstream modules require and build the working
    /// objects. All construction failures map to invalid-config.
    pub fn build(&self) -> Result<Experiment, CliError> {
        let bad = |what: &str, e: &dyn std::fmt::Display| {
            CliError::InvalidConfig(format!("{what}: {e}"))
        };
        let a = Matrix::from_rows(&self.system.a).map_err(|e| bad("system.a", &e))?;
        let b = Matrix::from_rows(&self.system.b).map_err(|e| bad("system.b", &e))?;
        let e_mat = Matrix::from_rows(&self.system.e).map_err(|e| bad("system.e", &e))?;
        let k = Matrix::from_rows(&self.system.k).map_err(|e| bad("system.k", &e))?;
        let sigma_w = Matrix::from_rows(&self.system.sigma_w).map_err(|e| bad("system.sigma_w", &e))?;

        let disturbance = MomentAmbiguitySet::new(sigma_w.clone(), self.epsilon)
            .map_err(|e| bad("disturbance model", &e))?;
        let closed_loop = ClosedLoopSystem::new(a, b, e_mat, k, disturbance)
            .map_err(|e| bad("closed loop", &e))?;

        if self.x0.len() != closed_loop.state_dim() {
            return Err(CliError::InvalidConfig(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                closed_loop.state_dim()
            )));
        }
        if self.horizon == 0 {
            return Err(CliError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.runs < 2 {
            return Err(CliError::InvalidConfig("runs must be at least 2".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(CliError::InvalidConfig(format!(
                "radius must be a positive real, got {}",
                self.radius
            )));
        }
        self.trigger.parse()?;

        let sampler_kind = self.sampler.parse()?;
        let sampler = DisturbanceSampler::new(sampler_kind, sigma_w, self.seed)
            .map_err(|e| bad("sampler", &e))?;
        let plant = SimPlant::from(&closed_loop);

        Ok(Experiment {
            config: self.clone(),
            closed_loop,
            plant,
            sampler,
        })
    }
}

impl SamplerConfig {
    pub fn parse(&self) -> Result<SamplerKind, CliError> {
        match self.kind.as_str() {
            "gaussian" => Ok(SamplerKind::Gaussian),
            "student_t" => Ok(SamplerKind::StudentT {
                dof: self.dof.unwrap_or(5.0),
            }),
            "uniform" => Ok(SamplerKind::ScaledUniform),
            "two_point" => Ok(SamplerKind::TwoPoint),
            other => Err(CliError::InvalidConfig(format!(
                "unknown sampler kind {other:?}; expected gaussian|student_t|uniform|two_point"
            ))),
        }
    }
}

/// A parsed trigger request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerSpec {
    Corollary(u8),
    Explicit { sigma: f64, kind: TriggerKind },
}

fn parse_kind(name: &str) -> Result<TriggerKind, CliError> {
    match name {
        "state_error_abs" => Ok(TriggerKind::StateErrorAbs),
        "input_error_abs" => Ok(TriggerKind::InputErrorAbs),
        "state_error_rel" => Ok(TriggerKind::StateErrorRel),
        "input_error_rel" => Ok(TriggerKind::InputErrorRel),
        other => Err(CliError::InvalidConfig(format!(
            "unknown trigger kind {other:?}"
        ))),
    }
}

impl TriggerConfig {
    pub fn parse(&self) -> Result<TriggerSpec, CliError> {
        match (self.corollary, self.sigma) {
            (Some(c), None) => {
                if !(1..=4).contains(&c) {
                    return Err(CliError::InvalidConfig(format!(
                        "trigger corollary must be 1..4, got {c}"
                    )));
                }
                if self.kind.is_some() {
                    return Err(CliError::InvalidConfig(
                        "trigger kind is implied by the corollary; drop one of them".into(),
                    ));
                }
                Ok(TriggerSpec::Corollary(c))
            }
            (None, Some(sigma)) => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(CliError::InvalidConfig(format!(
                        "trigger sigma must be a nonnegative real, got {sigma}"
                    )));
                }
                let kind = match &self.kind {
                    Some(name) => parse_kind(name)?,
                    None => TriggerKind::StateErrorAbs,
                };
                Ok(TriggerSpec::Explicit { sigma, kind })
            }
            (Some(_), Some(_)) => Err(CliError::InvalidConfig(
                "trigger must give either a corollary or a sigma, not both".into(),
            )),
            (None, None) => Err(CliError::InvalidConfig(
                "trigger must give a corollary (1..4) or an explicit sigma".into(),
            )),
        }
    }
}

/// Validated, ready-to-run experiment objects.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub closed_loop: ClosedLoopSystem,
    pub plant: SimPlant,
    pub sampler: DisturbanceSampler,
}

impl Experiment {
    /// Resolve the configured trigger into a policy at radius `r`.
    ///
    /// Corollary triggers synthesize their maximal threshold; an infeasible
    /// radius is the exit-code-3 failure. The absolute input-error variant
    /// backs corollary 4 (the variant whose guarantee the certificates
    /// cover).
    pub fn resolve_policy(&self, r: f64) -> Result<(TriggerPolicy, f64), CliError> {
        let spec = self.config.trigger.parse()?;
        self.policy_for_spec(spec, r)
    }

    pub fn policy_for_spec(
        &self,
        spec: TriggerSpec,
        r: f64,
    ) -> Result<(TriggerPolicy, f64), CliError> {
        let infeasible = |e: &dyn std::fmt::Display| CliError::Infeasible(e.to_string());
        let gain = self.closed_loop.gain().clone();
        let (policy, sigma) = match spec {
            TriggerSpec::Corollary(1) => {
                let s = sigma1_max(&self.closed_loop, r).map_err(|e| infeasible(&e))?;
                (TriggerPolicy::state_error_abs(s).unwrap(), s)
            }
            TriggerSpec::Corollary(2) => {
                let s = sigma2_max(&self.closed_loop, r).map_err(|e| infeasible(&e))?;
                (TriggerPolicy::input_error_abs(s, gain).unwrap(), s)
            }
            TriggerSpec::Corollary(3) => {
                let s = sigma3_max(&self.closed_loop, r).map_err(|e| infeasible(&e))?;
                (TriggerPolicy::state_error_abs(s).unwrap(), s)
            }
            TriggerSpec::Corollary(4) => {
                let s = sigma4_max(&self.closed_loop, r).map_err(|e| infeasible(&e))?;
                (TriggerPolicy::input_error_abs(s, gain).unwrap(), s)
            }
            TriggerSpec::Corollary(_) => unreachable!("validated in parse"),
            TriggerSpec::Explicit { sigma, kind } => {
                let gain_arg = kind.uses_gain().then_some(gain);
                (
                    TriggerPolicy::new(kind, sigma, gain_arg)
                        .map_err(|e| CliError::InvalidConfig(e.to_string()))?,
                    sigma,
                )
            }
        };
        Ok((policy, sigma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_builds_and_roundtrips() {
        let config = paper_example();
        let text = config.to_toml();
        let reparsed = ExperimentConfig::from_toml(&text).unwrap();
        // serialize(parse(text)) is idempotent
        assert_eq!(text, reparsed.to_toml());
        assert!(reparsed.build().is_ok());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        let mut text = paper_example().to_toml();
        text.push_str("\nbogus_field = 1\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());

        let mut config = paper_example();
        config.horizon = 0;
        assert!(matches!(
            config.build(),
            Err(CliError::InvalidConfig(_))
        ));

        let mut config = paper_example();
        config.epsilon = 1.5;
        assert!(config.build().is_err());

        let mut config = paper_example();
        config.system.k = vec![vec![0.0, 0.0]];
        // unstabilized closed loop fails construction
        assert!(config.build().is_err());
    }

    #[test]
    fn trigger_spec_parsing() {
        let corollary = TriggerConfig {
            corollary: Some(3),
            sigma: None,
            kind: None,
        };
        assert_eq!(corollary.parse().unwrap(), TriggerSpec::Corollary(3));

        let explicit = TriggerConfig {
            corollary: None,
            sigma: Some(0.5),
            kind: Some("input_error_rel".into()),
        };
        assert!(matches!(
            explicit.parse().unwrap(),
            TriggerSpec::Explicit {
                kind: TriggerKind::InputErrorRel,
                ..
            }
        ));

        let both = TriggerConfig {
            corollary: Some(1),
            sigma: Some(0.5),
            kind: None,
        };
        assert!(both.parse().is_err());
        let neither = TriggerConfig {
            corollary: None,
            sigma: None,
            kind: None,
        };
        assert!(neither.parse().is_err());
    }

    #[test]
    fn corollary_policies_resolve_at_feasible_radius() {
        let exp = paper_example().build().unwrap();
        let (_, s1) = exp.policy_for_spec(TriggerSpec::Corollary(1), 6.0).unwrap();
        assert!((s1 - 1.3618700639740846).abs() < 1e-10);
        let err = exp.policy_for_spec(TriggerSpec::Corollary(1), 1.0);
        assert!(matches!(err, Err(CliError::Infeasible(_))));
    }
}

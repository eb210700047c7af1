//! Versioned JSON run manifests.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use loglip_core::ldp::PathEvent;
use loglip_core::lyapunov::GrowthProfile;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Omitted by experiments that do not evaluate a coefficient field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    pub experiment: Experiment,
    /// Default output directory; `--out` and the environment override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

/// A field key (`sine_series`, `constant`, `linear`, `log_growth`,
/// `log_sq_growth`, `truncated:<base>:<R>`) and its numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub key: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Experiment {
    Simulate(SimulateParams),
    Skeleton(SkeletonParams),
    Converge(ConvergeParams),
    Lifetime(LifetimeParams),
    Stability(StabilityParams),
    Rate(RateParams),
    Ldp(LdpParams),
    Closeness(ClosenessParams),
    Osgood(OsgoodParams),
    #[serde(alias = "lemma24")]
    SineBound(SineBoundParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Skeleton(_) => "skeleton",
            Experiment::Converge(_) => "converge",
            Experiment::Lifetime(_) => "lifetime",
            Experiment::Stability(_) => "stability",
            Experiment::Rate(_) => "rate",
            Experiment::Ldp(_) => "ldp",
            Experiment::Closeness(_) => "closeness",
            Experiment::Osgood(_) => "osgood",
            Experiment::SineBound(_) => "sine_bound",
        }
    }

    pub fn needs_field(&self) -> bool {
        !matches!(self, Experiment::Osgood(_) | Experiment::SineBound(_))
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub epsilon: f64,
    pub x0: Vec<f64>,
    #[serde(default = "one")]
    pub horizon: f64,
    pub steps: usize,
    #[serde(default)]
    pub trial: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Zero { steps: usize },
    /// `g(t) = t · slope`.
    Linear { steps: usize, slope: Vec<f64> },
    /// Knot values `g(t_1), …, g(t_K)` flattened row by row; `g(0) = 0`.
    Knots { steps: usize, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonParams {
    pub x0: Vec<f64>,
    #[serde(default = "one")]
    pub horizon: f64,
    pub control: ControlSpec,
    /// RK4 mesh for the skeleton; a multiple of the control mesh.
    pub solver_steps: usize,
    /// Also emit the Euler polygon on this many steps.
    #[serde(default)]
    pub polygon_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeParams {
    pub x0: Vec<f64>,
    pub alpha: f64,
    pub controls: usize,
    pub control_steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    pub ladder: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeParams {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub radii: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityParams {
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub deltas: Vec<f64>,
    pub threshold: f64,
    pub trials: u64,
    pub steps: usize,
}

/// Optimizer settings; unset entries take the library defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_growth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    pub x0: Vec<f64>,
    #[serde(default = "one")]
    pub horizon: f64,
    pub event: PathEvent,
    #[serde(default)]
    pub optimizer: OptimizerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpParams {
    pub x0: Vec<f64>,
    #[serde(default = "one")]
    pub horizon: f64,
    pub event: PathEvent,
    pub epsilons: Vec<f64>,
    pub steps: usize,
    pub trials: u64,
    #[serde(default)]
    pub optimizer: OptimizerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosenessParams {
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub ladder: Vec<usize>,
    pub delta: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsgoodParams {
    pub profiles: Vec<GrowthProfile>,
    #[serde(default = "half")]
    pub a: f64,
    /// Defaults to the library ladder.
    #[serde(default)]
    pub ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineBoundParams {
    /// Log-spaced grid `[lo, hi]` with `count` points.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub terms: usize,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let m: Manifest = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("manifest: {e}")))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        if m.experiment.needs_field() && m.field.is_none() {
            return Err(CliError::Validation(format!(
                "experiment `{}` needs a field",
                m.experiment.kind()
            )));
        }
        Ok(m)
    }

    /// Canonical serialization: struct fields in declaration order and
    /// parameter maps sorted by key.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    /// SHA-256 of [`Manifest::canonical_json`], hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: &str = r#"{
        "schema_version": 1,
        "seed": 3,
        "field": {"key": "constant", "params": {"drift": [0.0], "diffusion": [1.0], "noise_dim": 1}},
        "experiment": {"kind": "rate", "params": {
            "x0": [0.0],
            "event": {"kind": "terminal_hit", "target": [1.0], "tol": 0.0},
            "optimizer": {"knots": 16}
        }}
    }"#;

    #[test]
    fn round_trip_is_lossless() {
        let m = Manifest::from_json(RATE).unwrap();
        let again = Manifest::from_json(&m.canonical_json()).unwrap();
        assert_eq!(m, again);
        assert_eq!(m.digest(), again.digest());
    }

    #[test]
    fn digest_ignores_formatting_only() {
        let a = Manifest::from_json(RATE).unwrap();
        let b = Manifest::from_json(&RATE.replace("\"seed\": 3", "\"seed\": 4")).unwrap();
        let c = Manifest::from_json(&RATE.replace('\n', " ")).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), c.digest());
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(Manifest::from_json(&RATE.replace("\"seed\"", "\"sed\"")).is_err());
        assert!(Manifest::from_json(&RATE.replace("\"schema_version\": 1", "\"schema_version\": 2")).is_err());
    }
}

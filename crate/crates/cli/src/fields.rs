//! Field keys to coefficient fields.

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use loglip_core::coeffs::{
    sine_series_field, truncate_field_with, CoefficientField, SineLifting, SineSeriesField,
    TRUNCATION_SAFETY,
};

use crate::manifest::FieldSpec;
use crate::CliError;

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum Lifting {
    Copies,
    FirstComponent,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SineParams {
    /// Omitted: the full series in closed form.
    terms: Option<usize>,
    #[serde(default)]
    diffusion: f64,
    #[serde(default)]
    lifting: Option<Lifting>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixParams {
    #[serde(alias = "matrix")]
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    noise_dim: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrowthParams {
    #[serde(default = "one")]
    dim: usize,
    #[serde(default)]
    scale: f64,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TruncationParams {
    #[serde(default = "default_probes")]
    probes: usize,
    #[serde(default = "default_safety")]
    safety: f64,
}

fn default_probes() -> usize {
    4096
}

fn default_safety() -> f64 {
    TRUNCATION_SAFETY
}

fn parse<T: DeserializeOwned>(key: &str, params: Map<String, Value>) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(params))
        .map_err(|e| CliError::Validation(format!("field `{key}`: {e}")))
}

pub fn build_field(spec: &FieldSpec) -> Result<CoefficientField, CliError> {
    build(&spec.key, spec.params.clone())
}

fn build(key: &str, mut params: Map<String, Value>) -> Result<CoefficientField, CliError> {
    if let Some(rest) = key.strip_prefix("truncated:") {
        let Some((base, radius)) = rest.rsplit_once(':') else {
            return Err(CliError::Validation(format!(
                "field key `{key}` must read truncated:<base>:<R>"
            )));
        };
        let radius: f64 = radius
            .parse()
            .map_err(|_| CliError::Validation(format!("bad truncation radius in `{key}`")))?;
        let mut own = Map::new();
        for k in ["probes", "safety"] {
            if let Some(v) = params.remove(k) {
                own.insert(k.into(), v);
            }
        }
        let t: TruncationParams = parse(key, own)?;
        let inner = build(base, params)?;
        return Ok(truncate_field_with(&inner, radius, t.probes, t.safety)?);
    }
    let field = match key {
        "sine_series" => {
            let p: SineParams = parse(key, params)?;
            let s = match p.terms {
                Some(k) => sine_series_field(k)?,
                None => SineSeriesField::exact(),
            };
            let lifting = match p.lifting {
                None | Some(Lifting::Copies) => SineLifting::Copies,
                Some(Lifting::FirstComponent) => SineLifting::FirstComponent,
            };
            s.with_lifting(lifting).with_diffusion(p.diffusion).into_field()
        }
        "constant" => {
            let p: MatrixParams = parse(key, params)?;
            CoefficientField::constant(p.drift, p.diffusion, p.noise_dim)?
        }
        "linear" => {
            let p: MatrixParams = parse(key, params)?;
            CoefficientField::linear(p.drift, p.diffusion, p.noise_dim)?
        }
        "log_growth" => {
            let p: GrowthParams = parse(key, params)?;
            CoefficientField::log_growth(p.dim, p.scale)?
        }
        "log_sq_growth" => {
            let p: GrowthParams = parse(key, params)?;
            CoefficientField::log_sq_growth(p.dim, p.scale)?
        }
        other => return Err(CliError::Validation(format!("unknown field key `{other}`"))),
    };
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn spec(v: Value) -> FieldSpec {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn builds_every_key() {
        for v in [
            json!({"key": "sine_series"}),
            json!({"key": "sine_series", "params": {"terms": 10, "diffusion": 0.5, "lifting": "first_component"}}),
            json!({"key": "constant", "params": {"drift": [1.0], "diffusion": [2.0], "noise_dim": 1}}),
            json!({"key": "linear", "params": {"matrix": [-1.0], "diffusion": [0.0], "noise_dim": 1}}),
            json!({"key": "log_growth", "params": {"dim": 2, "scale": 0.1}}),
            json!({"key": "log_sq_growth"}),
            json!({"key": "truncated:log_growth:3", "params": {"scale": 1.0, "probes": 64}}),
        ] {
            build_field(&spec(v.clone())).unwrap_or_else(|e| panic!("{v}: {e}"));
        }
    }

    #[test]
    fn truncated_name_and_bounds() {
        let f = build_field(&spec(json!({"key": "truncated:sine_series:10", "params": {"diffusion": 1.0}})))
            .unwrap();
        assert_eq!(f.name(), "truncated:sine_series:10");
        assert!(f.bounds().is_some());
    }

    #[test]
    fn rejects_unknown_key_and_params() {
        assert!(matches!(
            build_field(&spec(json!({"key": "nope"}))),
            Err(CliError::Validation(m)) if m.contains("unknown field key")
        ));
        assert!(build_field(&spec(json!({"key": "log_growth", "params": {"dimm": 2}}))).is_err());
        assert!(build_field(&spec(json!({"key": "truncated:log_growth"}))).is_err());
    }
}

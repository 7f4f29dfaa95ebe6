use std::path::Path;

use hybrid_orbit::hybrid::HybridState;
use hybrid_orbit::numerics::linalg::RANK_TOL;
use hybrid_orbit::numerics::ode::IntegratorOptions;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::{invalid, CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub model: String,
    /// Overrides of the model's default parameters.
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub horizon: Option<HorizonSpec>,
    #[serde(default)]
    pub section: Option<SectionSpec>,
    /// Overrides of the integrator defaults (`rel_tol`, `abs_tol`, ...).
    #[serde(default)]
    pub integrator: Map<String, Value>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub domain: usize,
    pub x: Vec<f64>,
}

impl InitialSpec {
    pub fn state(&self) -> HybridState {
        HybridState::new(self.domain, self.x.clone())
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    pub time: f64,
    #[serde(default)]
    pub events: Option<usize>,
}

/// Either a coordinate level `x[coordinate] = value` in `domain`, crossed in
/// `direction`, or the face of `guard`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    #[serde(default)]
    pub domain: Option<usize>,
    #[serde(default)]
    pub coordinate: Option<usize>,
    #[serde(default)]
    pub value: f64,
    #[serde(default = "one")]
    pub direction: f64,
    #[serde(default)]
    pub guard: Option<usize>,
    /// Full state near the section; fixes the chart.
    #[serde(default)]
    pub base_point: Option<Vec<f64>>,
    /// Section coordinates where the periodic-orbit search starts.
    #[serde(default)]
    pub guess: Option<Vec<f64>>,
    /// Guard sequence every return must follow.
    #[serde(default)]
    pub sequence: Option<Vec<usize>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub rank_tol: f64,
    pub radius: f64,
    pub samples: usize,
    pub magnitude: f64,
    pub cycles: usize,
    pub phase_points: usize,
    pub isochron_points: usize,
    pub isochron_radius: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            rank_tol: RANK_TOL,
            radius: 0.05,
            samples: 16,
            magnitude: 1e-3,
            cycles: 8,
            phase_points: 8,
            isochron_points: 4,
            isochron_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    /// Parameter names used as control inputs; array parameters contribute every entry.
    pub inputs: Vec<String>,
    /// Fixed number of cycles; when absent the smallest feasible count is searched.
    pub cycles: Option<usize>,
    pub max_cycles: Option<usize>,
    pub radius: f64,
    pub samples: usize,
    pub steps: usize,
    pub samples_per_step: usize,
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec {
            inputs: Vec::new(),
            cycles: None,
            max_cycles: None,
            radius: 0.05,
            samples: 8,
            steps: 3,
            samples_per_step: 20,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigIo {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
                path: path.display().to_string(),
                source,
            })?;
        if let Some(v) = cfg.schema_version {
            if v != crate::report::SCHEMA_VERSION {
                return Err(invalid(format!("unsupported schema_version {v}")));
            }
        }
        Ok(cfg)
    }

    pub fn integrator(&self, base: &IntegratorOptions) -> CliResult<IntegratorOptions> {
        let defaults = serde_json::to_value(base).map_err(|e| invalid(e.to_string()))?;
        let merged = merge("integrator", defaults, &self.integrator)?;
        serde_json::from_value(merged).map_err(|e| invalid(format!("integrator: {e}")))
    }

    pub fn section(&self) -> CliResult<&SectionSpec> {
        self.section
            .as_ref()
            .ok_or_else(|| invalid("this command needs a section"))
    }
}

/// Overlay `overrides` on the object `defaults`; unknown keys are rejected.
pub fn merge(what: &str, defaults: Value, overrides: &Map<String, Value>) -> CliResult<Value> {
    let Value::Object(mut base) = defaults else {
        return Err(invalid(format!("{what}: defaults are not an object")));
    };
    for (k, v) in overrides {
        if !base.contains_key(k) {
            return Err(invalid(format!("{what}: unknown field {k:?}")));
        }
        base.insert(k.clone(), v.clone());
    }
    Ok(Value::Object(base))
}

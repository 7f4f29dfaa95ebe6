use std::sync::Arc;

use hybrid_orbit::control::embedding::PolypedEmbedding;
use hybrid_orbit::hybrid::{HybridState, HybridSystem};
use hybrid_orbit::models::hopper::{self, HopperParams};
use hybrid_orbit::models::lls::{self, LlsParams};
use hybrid_orbit::models::oracles::{self, ProjectGlueParams};
use hybrid_orbit::models::polyped::PolypedParams;
use hybrid_orbit::numerics::linalg::Mat;
use hybrid_orbit::numerics::ode::IntegratorOptions;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::merge;
use crate::error::{invalid, CliError, CliResult};

pub struct Built {
    pub system: Arc<HybridSystem>,
    pub start: HybridState,
    pub opts: IntegratorOptions,
    pub embedding: Option<PolypedEmbedding>,
}

pub struct ModelEntry {
    pub name: &'static str,
    pub summary: &'static str,
    defaults: fn() -> Value,
    build: fn(&Value) -> CliResult<Built>,
}

impl ModelEntry {
    pub fn defaults(&self) -> Value {
        (self.defaults)()
    }

    /// Defaults with `overrides` applied.
    pub fn params(&self, overrides: &Map<String, Value>) -> CliResult<Value> {
        merge(self.name, self.defaults(), overrides)
    }

    pub fn build(&self, params: &Value) -> CliResult<Built> {
        (self.build)(params)
    }
}

pub fn lookup(name: &str) -> CliResult<&'static ModelEntry> {
    MODELS
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| CliError::UnknownModel(name.to_string()))
}

static MODELS: [ModelEntry; 7] = [
    ModelEntry {
        name: "hopper",
        summary: "vertical two-mass hopper with a damped leg spring and plastic touchdown",
        defaults: || to_value(&HopperParams::default()),
        build: build_hopper,
    },
    ModelEntry {
        name: "lls",
        summary: "lateral leg-spring template alternating left and right stance",
        defaults: || to_value(&LlsParams::default()),
        build: build_lls,
    },
    ModelEntry {
        name: "polyped",
        summary: "planar polyped whose body is driven to follow the lateral leg-spring template",
        defaults: polyped_defaults,
        build: build_polyped,
    },
    ModelEntry {
        name: "halfturn",
        summary:
            "rotation on two half-planes glued by a radial contraction (closed-form return map)",
        defaults: || json!({ "lambda": 0.6, "x0": 1.0, "theta": 0.0 }),
        build: build_halfturn,
    },
    ModelEntry {
        name: "projectglue",
        summary: "three- and two-dimensional domains glued by a projection (rank-one return map)",
        defaults: || to_value(&ProjectGlueParams::default()),
        build: build_projectglue,
    },
    ModelEntry {
        name: "linear_clock",
        summary: "linear map x -> C x + B theta realized with a unit clock",
        defaults: clock_defaults,
        build: build_clock,
    },
    ModelEntry {
        name: "system",
        summary: "system given in the config: affine fields, half-space faces, affine or projection resets",
        defaults: crate::document::default_doc,
        build: build_document,
    },
];

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("parameter structs serialize")
}

fn from_value<T: for<'de> Deserialize<'de>>(name: &str, v: &Value) -> CliResult<T> {
    serde_json::from_value(v.clone()).map_err(|e| invalid(format!("{name} parameters: {e}")))
}

fn build_hopper(v: &Value) -> CliResult<Built> {
    let p: HopperParams = from_value("hopper", v)?;
    Ok(Built {
        system: Arc::new(hopper::make_hopper(&p)?),
        start: HybridState::new(hopper::AERIAL, vec![2.6, 0.0, 0.4, 0.0]),
        opts: IntegratorOptions::default(),
        embedding: None,
    })
}

fn build_lls(v: &Value) -> CliResult<Built> {
    let p: LlsParams = from_value("lls", v)?;
    Ok(Built {
        system: Arc::new(lls::make_lls(&p)?),
        start: HybridState::new(lls::LEFT, p.step_start(1.0, &lls::DEFAULT_GAIT)),
        opts: IntegratorOptions::default(),
        embedding: None,
    })
}

#[derive(Deserialize)]
struct PolypedConfig {
    legs: usize,
    #[serde(flatten)]
    lls: LlsParams,
}

fn polyped_defaults() -> Value {
    let mut v = to_value(&LlsParams::default());
    v["legs"] = json!(4);
    v
}

fn build_polyped(v: &Value) -> CliResult<Built> {
    let c: PolypedConfig = from_value("polyped", v)?;
    let pp = PolypedParams::grid(c.legs, &c.lls)?;
    let emb = PolypedEmbedding::new(&pp, &c.lls)?;
    let start = emb.nominal_state(lls::LEFT, &c.lls.step_start(1.0, &lls::DEFAULT_GAIT))?;
    Ok(Built {
        system: emb.system().clone(),
        start,
        opts: emb.options().clone(),
        embedding: Some(emb),
    })
}

#[derive(Deserialize)]
struct HalfturnConfig {
    lambda: f64,
    x0: f64,
    theta: f64,
}

fn build_halfturn(v: &Value) -> CliResult<Built> {
    let c: HalfturnConfig = from_value("halfturn", v)?;
    Ok(Built {
        system: Arc::new(oracles::make_controlled_halfturn(c.lambda, c.x0, c.theta)?),
        start: HybridState::new(oracles::UPPER, vec![0.0, 1.5 * c.x0]),
        opts: IntegratorOptions::default(),
        embedding: None,
    })
}

fn build_projectglue(v: &Value) -> CliResult<Built> {
    let p: ProjectGlueParams = from_value("projectglue", v)?;
    Ok(Built {
        system: Arc::new(oracles::make_projectglue_oracle(&p)?),
        start: HybridState::new(oracles::PG_A, vec![1.0, -0.5, 0.2]),
        opts: IntegratorOptions::default(),
        embedding: None,
    })
}

#[derive(Deserialize)]
struct ClockConfig {
    c: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    theta: Vec<f64>,
}

fn clock_defaults() -> Value {
    let c = oracles::nilpotent_oracle_matrix();
    json!({ "c": rows(&c), "b": vec![Vec::<f64>::new(); c.nrows()], "theta": Vec::<f64>::new() })
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    hybrid_orbit::numerics::linalg::to_rows(m)
}

fn matrix(name: &str, rows: &[Vec<f64>], ncols: usize) -> CliResult<Mat> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(format!(
            "linear_clock: every row of {name} needs {ncols} entries"
        )));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn build_clock(v: &Value) -> CliResult<Built> {
    let c: ClockConfig = from_value("linear_clock", v)?;
    let n = c.c.len();
    if n == 0 {
        return Err(invalid("linear_clock: C must be non-empty"));
    }
    let cm = matrix("c", &c.c, n)?;
    if c.b.len() != n {
        return Err(invalid("linear_clock: B needs one row per state"));
    }
    let bm = matrix("b", &c.b, c.theta.len())?;
    let mut x0: Vec<f64> = (0..n).map(|i| 0.1 * (i + 1) as f64).collect();
    x0.push(0.25);
    Ok(Built {
        system: Arc::new(oracles::make_linear_clock_oracle(&cm, &bm, &c.theta)?),
        start: HybridState::new(0, x0),
        opts: IntegratorOptions::default(),
        embedding: None,
    })
}

fn build_document(v: &Value) -> CliResult<Built> {
    let (system, start) = crate::document::build_value(v)?;
    Ok(Built {
        system,
        start,
        opts: IntegratorOptions::default(),
        embedding: None,
    })
}

/// Registry listing with parameter schemas and the shape of each system.
pub fn describe() -> Value {
    let models: Vec<Value> = MODELS
        .iter()
        .map(|m| {
            let defaults = m.defaults();
            let schema: Map<String, Value> = defaults
                .as_object()
                .map(|o| o.iter().map(|(k, v)| (k.clone(), json!({ "type": kind(v), "default": v }))).collect())
                .unwrap_or_default();
            let shape = m.build(&defaults).ok().map(|b| {
                let domains: Vec<Value> = b
                    .system
                    .domains
                    .iter()
                    .enumerate()
                    .map(|(i, d)| json!({ "id": i, "name": d.name, "dim": d.dim }))
                    .collect();
                let guards: Vec<Value> = b
                    .system
                    .guards
                    .iter()
                    .enumerate()
                    .map(|(i, g)| json!({ "id": i, "name": g.name, "from": g.domain, "to": g.target }))
                    .collect();
                json!({ "domains": domains, "guards": guards })
            });
            json!({ "name": m.name, "summary": m.summary, "parameters": schema, "system": shape })
        })
        .collect();
    json!({ "schema_version": crate::report::SCHEMA_VERSION, "models": models })
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Number(n) if n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::Array(a) if a.first().is_some_and(|x| x.is_array()) => "matrix",
        Value::Array(_) => "array",
        Value::Bool(_) => "boolean",
        Value::String(_) => "string",
        _ => "object",
    }
}

/// Flattened numeric values of the named parameters.
pub fn read_inputs(params: &Value, names: &[String]) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for name in names {
        match params.get(name) {
            Some(Value::Number(n)) => out.push(n.as_f64().unwrap_or(f64::NAN)),
            Some(Value::Array(a)) if a.iter().all(Value::is_number) => {
                out.extend(a.iter().filter_map(Value::as_f64))
            }
            Some(_) => return Err(invalid(format!("control input {name:?} is not numeric"))),
            None => {
                return Err(invalid(format!(
                    "control input {name:?} is not a model parameter"
                )))
            }
        }
    }
    Ok(out)
}

/// `params` with the named inputs replaced by the entries of `theta`, in order.
pub fn write_inputs(params: &Value, names: &[String], theta: &[f64]) -> CliResult<Value> {
    let mut v = params.clone();
    let mut it = theta.iter().copied();
    let mut next = || it.next().ok_or_else(|| invalid("too few input values"));
    for name in names {
        let slot = v
            .get_mut(name)
            .ok_or_else(|| invalid(format!("unknown input {name:?}")))?;
        match slot {
            Value::Array(a) => {
                for e in a.iter_mut() {
                    *e = json!(next()?);
                }
            }
            other => *other = json!(next()?),
        }
    }
    Ok(v)
}

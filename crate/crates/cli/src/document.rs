//! Hybrid systems described entirely in JSON, built from affine pieces.
//!
//! Fields are `dx = A x + c`, faces are `n . x + b >= 0` and resets are
//! `x -> M x + c`, all given as dense rows.

use std::sync::Arc;

use hybrid_orbit::hybrid::{field_fn, level_fn, reset_fn, HybridState, HybridSystem};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{invalid, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    #[serde(default = "default_name")]
    pub name: String,
    pub domains: Vec<DomainDoc>,
    #[serde(default)]
    pub guards: Vec<GuardDoc>,
    pub start: StartDoc,
}

fn default_name() -> String {
    "system".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDoc {
    pub name: String,
    pub dim: usize,
    pub field: FieldDoc,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldDoc {
    Affine {
        a: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
    /// Planar rotation at angular rate `omega`.
    Rotation {
        omega: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardDoc {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub face: HalfSpace,
    #[serde(default)]
    pub predicate: Option<HalfSpace>,
    pub reset: ResetDoc,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResetDoc {
    Identity,
    Affine {
        m: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
    /// Keep the listed coordinates in order.
    Project {
        keep: Vec<usize>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartDoc {
    pub domain: usize,
    pub x: Vec<f64>,
}

/// A decaying coordinate with a unit clock that wraps at `w = 1`.
pub fn default_doc() -> Value {
    json!({
        "name": "clocked decay",
        "domains": [{
            "name": "run",
            "dim": 2,
            "field": { "kind": "affine", "a": [[-0.5, 0.0], [0.0, 0.0]], "c": [0.0, 1.0] }
        }],
        "guards": [{
            "name": "wrap",
            "from": 0,
            "to": 0,
            "face": { "normal": [0.0, -1.0], "offset": 1.0 },
            "reset": { "kind": "affine", "m": [[1.0, 0.0], [0.0, 0.0]], "c": [0.5, 0.0] }
        }],
        "start": { "domain": 0, "x": [1.0, 0.0] }
    })
}

fn check_matrix(what: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> CliResult<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(invalid(format!("{what} must be {rows}x{cols}")));
    }
    Ok(())
}

fn check_len(what: &str, v: &[f64], n: usize) -> CliResult<()> {
    if v.len() != n {
        return Err(invalid(format!(
            "{what} needs {n} entries, got {}",
            v.len()
        )));
    }
    Ok(())
}

fn affine(m: Vec<Vec<f64>>, c: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> + Send + Sync + Clone {
    move |x: &[f64]| {
        m.iter()
            .zip(&c)
            .map(|(row, ci)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ci)
            .collect()
    }
}

fn half_space(
    what: &str,
    h: HalfSpace,
    dim: usize,
) -> CliResult<impl Fn(&[f64]) -> f64 + Send + Sync + Clone> {
    check_len(what, &h.normal, dim)?;
    Ok(move |x: &[f64]| h.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + h.offset)
}

pub fn build(doc: SystemDoc) -> CliResult<(HybridSystem, HybridState)> {
    let mut s = HybridSystem::new(&doc.name);
    let dims: Vec<usize> = doc.domains.iter().map(|d| d.dim).collect();
    for d in doc.domains {
        if d.dim == 0 {
            return Err(invalid(format!("domain {:?} has dimension 0", d.name)));
        }
        let n = d.dim;
        let field = match d.field {
            FieldDoc::Affine { a, c } => {
                check_matrix(&format!("field of {:?}", d.name), &a, n, n)?;
                check_len(&format!("field offset of {:?}", d.name), &c, n)?;
                let f = affine(a, c);
                field_fn(move |x, dx| dx.copy_from_slice(&f(x)))
            }
            FieldDoc::Rotation { omega } => {
                if n != 2 {
                    return Err(invalid(format!(
                        "rotation field of {:?} needs dimension 2",
                        d.name
                    )));
                }
                field_fn(move |x, dx| {
                    dx[0] = -omega * x[1];
                    dx[1] = omega * x[0];
                })
            }
        };
        s.add_domain(&d.name, n, field);
    }
    for g in doc.guards {
        let (Some(&n), Some(&m)) = (dims.get(g.from), dims.get(g.to)) else {
            return Err(invalid(format!(
                "guard {:?} references a missing domain",
                g.name
            )));
        };
        let face = s.add_face(
            g.from,
            &g.name,
            level_fn(half_space(&format!("face of {:?}", g.name), g.face, n)?),
        );
        let reset = match g.reset {
            ResetDoc::Identity if n == m => reset_fn(|x| x.to_vec()),
            ResetDoc::Identity => {
                return Err(invalid(format!(
                    "identity reset of {:?} changes dimension",
                    g.name
                )))
            }
            ResetDoc::Affine { m: mat, c } => {
                check_matrix(&format!("reset of {:?}", g.name), &mat, m, n)?;
                check_len(&format!("reset offset of {:?}", g.name), &c, m)?;
                reset_fn(affine(mat, c))
            }
            ResetDoc::Project { keep } => {
                if keep.len() != m || keep.iter().any(|&i| i >= n) {
                    return Err(invalid(format!(
                        "projection of {:?} must pick {m} of {n} coordinates",
                        g.name
                    )));
                }
                reset_fn(move |x| keep.iter().map(|&i| x[i]).collect())
            }
        };
        let id = s.add_guard(&g.name, g.from, face, g.to, reset);
        if let Some(p) = g.predicate {
            s.set_predicate(
                id,
                level_fn(half_space(&format!("predicate of {:?}", g.name), p, n)?),
            );
        }
    }
    s.check()?;
    match dims.get(doc.start.domain) {
        Some(&n) if n == doc.start.x.len() => {}
        _ => return Err(invalid("start state does not match its domain")),
    }
    Ok((s, HybridState::new(doc.start.domain, doc.start.x)))
}

pub fn build_value(v: &Value) -> CliResult<(Arc<HybridSystem>, HybridState)> {
    let doc: SystemDoc =
        serde_json::from_value(v.clone()).map_err(|e| invalid(format!("system document: {e}")))?;
    let (s, x) = build(doc)?;
    Ok((Arc::new(s), x))
}

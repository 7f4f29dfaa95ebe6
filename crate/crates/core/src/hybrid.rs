//! Hybrid systems: domains with vector fields and faces, guards with resets, and
//! their executions.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::numerics::linalg;
use crate::numerics::ode::{self, DenseSegment, IntegratorOptions, Watch, TRANSVERSALITY_FLOOR};

pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type LevelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ResetFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

pub fn field_fn<F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static>(f: F) -> FieldFn {
    Arc::new(f)
}

pub fn level_fn<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> LevelFn {
    Arc::new(f)
}

pub fn reset_fn<F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static>(f: F) -> ResetFn {
    Arc::new(f)
}

/// A boundary piece `{h = 0}` of a domain `{h >= 0, ...}`.
#[derive(Clone)]
pub struct Face {
    pub name: String,
    pub level: LevelFn,
}

#[derive(Clone)]
pub struct Domain {
    pub name: String,
    pub dim: usize,
    pub field: FieldFn,
    pub faces: Vec<Face>,
}

#[derive(Clone)]
pub struct Guard {
    pub name: String,
    pub domain: usize,
    pub face: usize,
    /// Extra activation condition, active where the value is positive.
    pub predicate: Option<LevelFn>,
    pub target: usize,
    pub reset: ResetFn,
}

#[derive(Clone)]
pub struct HybridSystem {
    pub name: String,
    pub domains: Vec<Domain>,
    pub guards: Vec<Guard>,
}

impl fmt::Debug for HybridSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("HybridSystem");
        d.field("name", &self.name);
        let doms: Vec<(&str, usize, usize)> = self
            .domains
            .iter()
            .map(|d| (d.name.as_str(), d.dim, d.faces.len()))
            .collect();
        d.field("domains", &doms);
        let gs: Vec<(usize, usize, usize)> = self
            .guards
            .iter()
            .map(|g| (g.domain, g.face, g.target))
            .collect();
        d.field("guards", &gs);
        d.finish()
    }
}

impl HybridSystem {
    pub fn new(name: &str) -> Self {
        HybridSystem {
            name: name.into(),
            domains: Vec::new(),
            guards: Vec::new(),
        }
    }

    pub fn add_domain(&mut self, name: &str, dim: usize, field: FieldFn) -> usize {
        self.domains.push(Domain {
            name: name.into(),
            dim,
            field,
            faces: Vec::new(),
        });
        self.domains.len() - 1
    }

    pub fn add_face(&mut self, domain: usize, name: &str, level: LevelFn) -> usize {
        let faces = &mut self.domains[domain].faces;
        faces.push(Face {
            name: name.into(),
            level,
        });
        faces.len() - 1
    }

    pub fn add_guard(
        &mut self,
        name: &str,
        domain: usize,
        face: usize,
        target: usize,
        reset: ResetFn,
    ) -> usize {
        self.guards.push(Guard {
            name: name.into(),
            domain,
            face,
            predicate: None,
            target,
            reset,
        });
        self.guards.len() - 1
    }

    pub fn set_predicate(&mut self, guard: usize, predicate: LevelFn) {
        self.guards[guard].predicate = Some(predicate);
    }

    pub fn dim(&self, domain: usize) -> usize {
        self.domains[domain].dim
    }

    pub fn min_dim(&self) -> usize {
        self.domains.iter().map(|d| d.dim).min().unwrap_or(0)
    }

    pub fn max_dim(&self) -> usize {
        self.domains.iter().map(|d| d.dim).max().unwrap_or(0)
    }

    pub fn eval_field(&self, domain: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        (self.domains[domain].field)(x, &mut out);
        out
    }

    pub fn guard_on(&self, domain: usize, face: usize) -> Option<usize> {
        self.guards
            .iter()
            .position(|g| g.domain == domain && g.face == face)
    }

    /// Structural consistency of indices; at most one guard per face.
    pub fn check(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::InvalidInput("system has no domains".into()));
        }
        for (i, g) in self.guards.iter().enumerate() {
            if g.domain >= self.domains.len() || g.target >= self.domains.len() {
                return Err(Error::InvalidInput(alloc::format!(
                    "guard {i} references a missing domain"
                )));
            }
            if g.face >= self.domains[g.domain].faces.len() {
                return Err(Error::InvalidInput(alloc::format!(
                    "guard {i} references a missing face"
                )));
            }
            if self.guards[..i]
                .iter()
                .any(|h| h.domain == g.domain && h.face == g.face)
            {
                return Err(Error::InvalidInput(alloc::format!(
                    "face of guard {i} already carries a guard"
                )));
            }
        }
        Ok(())
    }

    /// Whether the guard is active at `x` (predicate positive or absent).
    pub fn guard_active(&self, guard: usize, x: &[f64]) -> bool {
        self.guards[guard]
            .predicate
            .as_ref()
            .map(|p| p(x) > 0.0)
            .unwrap_or(true)
    }

    /// Smallest face value of `x` in its domain; non-negative inside.
    pub fn interior_margin(&self, domain: usize, x: &[f64]) -> f64 {
        self.domains[domain]
            .faces
            .iter()
            .map(|f| (f.level)(x))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HybridState {
    pub domain: usize,
    pub x: Vec<f64>,
}

impl HybridState {
    pub fn new(domain: usize, x: Vec<f64>) -> Self {
        HybridState { domain, x }
    }
}

/// Distance between states in the same domain, `None` across domains.
pub fn in_domain_distance(a: &HybridState, b: &HybridState) -> Option<f64> {
    if a.domain != b.domain || a.x.len() != b.x.len() {
        return None;
    }
    Some(linalg::dist(&a.x, &b.x))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionEvent {
    pub time: f64,
    pub guard: usize,
    pub from: usize,
    pub to: usize,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StopReason {
    Horizon,
    EventLimit,
    Section,
    GuardHit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub segments: Vec<DenseSegment>,
    pub events: Vec<TransitionEvent>,
    pub final_state: HybridState,
    pub final_time: f64,
    pub stop: StopReason,
}

impl ExecutionTrace {
    pub fn start_time(&self) -> f64 {
        self.segments
            .first()
            .map(|s| s.t_start())
            .unwrap_or(self.final_time)
    }

    pub fn guard_sequence(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.guard).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub time: f64,
    pub max_events: Option<usize>,
}

impl Horizon {
    pub fn time(t: f64) -> Self {
        Horizon {
            time: t,
            max_events: None,
        }
    }

    pub fn events(n: usize, t_max: f64) -> Self {
        Horizon {
            time: t_max,
            max_events: Some(n),
        }
    }
}

/// Optional early stop for an execution.
#[derive(Clone, Copy)]
pub enum StopRule<'a> {
    None,
    /// Stop when `direction * level` rises through zero inside `domain`, after
    /// having been below `-arm`.
    Level {
        domain: usize,
        level: &'a dyn Fn(&[f64]) -> f64,
        direction: f64,
        arm: f64,
    },
    /// Stop on the given guard before its reset is applied.
    Guard(usize),
}

/// Run the system from `x0` starting at time zero.
pub fn execute(
    sys: &HybridSystem,
    x0: &HybridState,
    horizon: Horizon,
    opts: &IntegratorOptions,
) -> Result<ExecutionTrace> {
    execute_until(sys, x0, 0.0, horizon, StopRule::None, opts)
}

const START_SLACK: f64 = 1e-9;

pub fn execute_until(
    sys: &HybridSystem,
    x0: &HybridState,
    t0: f64,
    horizon: Horizon,
    stop: StopRule<'_>,
    opts: &IntegratorOptions,
) -> Result<ExecutionTrace> {
    sys.check()?;
    opts.validate()?;
    if !(horizon.time >= 0.0) {
        return Err(Error::InvalidInput("negative horizon".into()));
    }
    let mut state = x0.clone();
    if state.domain >= sys.domains.len() {
        return Err(Error::InvalidInput("initial domain out of range".into()));
    }
    let mut t = t0;
    let t_end = t0 + horizon.time;
    let mut segments = Vec::new();
    let mut events: Vec<TransitionEvent> = Vec::new();
    let zeno_window = opts.event_tol * horizon.time.max(1.0);
    let mut burst = 0usize;
    loop {
        let dom = &sys.domains[state.domain];
        if state.x.len() != dom.dim {
            return Err(Error::DimensionMismatch {
                expected: dom.dim,
                got: state.x.len(),
            });
        }
        for (fi, f) in dom.faces.iter().enumerate() {
            let v = (f.level)(&state.x);
            let scale = linalg::norm(&state.x).max(1.0);
            if !(v >= -START_SLACK * scale) {
                return Err(Error::EscapeDomain {
                    domain: state.domain,
                    face: fi,
                    t,
                });
            }
        }
        let mut watches: Vec<Watch<'_>> =
            dom.faces.iter().map(|f| Watch::face(&*f.level)).collect();
        let section_fn;
        let mut section_idx = None;
        if let StopRule::Level {
            domain,
            level,
            direction,
            arm,
        } = stop
        {
            if domain == state.domain {
                section_fn = move |x: &[f64]| -direction * level(x);
                watches.push(Watch::armed(&section_fn, arm));
                section_idx = Some(watches.len() - 1);
            }
        }
        let flow = ode::integrate(
            &*dom.field,
            &state.x,
            t,
            t_end,
            &watches,
            opts,
            state.domain,
        )?;
        segments.push(flow.segment);
        let Some(cross) = flow.crossing else {
            state.x = flow.x_end;
            return Ok(ExecutionTrace {
                segments,
                events,
                final_state: state,
                final_time: t_end,
                stop: StopReason::Horizon,
            });
        };
        t = cross.t;
        if Some(cross.watch) == section_idx {
            state.x = cross.x;
            return Ok(ExecutionTrace {
                segments,
                events,
                final_state: state,
                final_time: t,
                stop: StopReason::Section,
            });
        }
        // Resolve which face carries the transition.
        let mut candidates: Vec<usize> = vec![cross.watch];
        candidates.extend(
            cross
                .coincident
                .iter()
                .copied()
                .filter(|&w| Some(w) != section_idx),
        );
        let active: Vec<(usize, usize)> = candidates
            .iter()
            .filter_map(|&f| sys.guard_on(state.domain, f).map(|g| (f, g)))
            .filter(|&(_, g)| sys.guard_active(g, &cross.x))
            .collect();
        if active.len() != 1 {
            return Err(Error::EscapeDomain {
                domain: state.domain,
                face: cross.watch,
                t,
            });
        }
        let (face, gi) = active[0];
        let level = &*dom.faces[face].level;
        let (d, ratio) = ode::transversality(&*dom.field, level, &cross.x);
        if ratio < TRANSVERSALITY_FLOOR || d >= 0.0 {
            return Err(Error::TangentialCrossing {
                watch: face,
                t,
                ratio,
            });
        }
        if let StopRule::Guard(g) = stop {
            if g == gi {
                state.x = cross.x;
                return Ok(ExecutionTrace {
                    segments,
                    events,
                    final_state: state,
                    final_time: t,
                    stop: StopReason::GuardHit,
                });
            }
        }
        let guard = &sys.guards[gi];
        let post = (guard.reset)(&cross.x);
        let tdim = sys.domains[guard.target].dim;
        if post.len() != tdim {
            return Err(Error::DimensionMismatch {
                expected: tdim,
                got: post.len(),
            });
        }
        if post.iter().any(|v| !v.is_finite()) {
            return Err(Error::EvaluationFailure { t, point: post });
        }
        if let Some(last) = events.last() {
            if t - last.time <= zeno_window {
                burst += 1;
                if burst >= opts.max_events_per_step {
                    return Err(Error::ZenoSuspicion {
                        events: burst + 1,
                        window: zeno_window,
                        t,
                    });
                }
            } else {
                burst = 0;
            }
        }
        events.push(TransitionEvent {
            time: t,
            guard: gi,
            from: state.domain,
            to: guard.target,
            pre: cross.x,
            post: post.clone(),
        });
        state = HybridState {
            domain: guard.target,
            x: post,
        };
        if let Some(n) = horizon.max_events {
            if events.len() >= n {
                return Ok(ExecutionTrace {
                    segments,
                    events,
                    final_state: state,
                    final_time: t,
                    stop: StopReason::EventLimit,
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum IssueKind {
    UnknownDomain,
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    NonFiniteField,
    /// The field does not leave the domain through an active guard.
    NotOutward {
        guard: usize,
        derivative: f64,
    },
    Tangent {
        guard: usize,
        ratio: f64,
    },
    ResetDimension {
        guard: usize,
        expected: usize,
        got: usize,
    },
    ResetOutsideTarget {
        guard: usize,
        face: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationIssue {
    pub sample: usize,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationReport {
    pub samples: usize,
    pub guard_checks: usize,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Tolerance for calling a sample "on" a face, relative to `max(1, |x|)`.
pub const ON_FACE_TOL: f64 = 1e-6;

/// Check the standing assumptions at sample states: the field is finite, points on
/// an active guard cross it transversally outward, and resets land inside the target.
pub fn validate(sys: &HybridSystem, samples: &[HybridState]) -> Result<ValidationReport> {
    sys.check()?;
    let mut rep = ValidationReport {
        samples: samples.len(),
        ..Default::default()
    };
    for (si, s) in samples.iter().enumerate() {
        let mut push = |kind| rep.issues.push(ValidationIssue { sample: si, kind });
        let Some(dom) = sys.domains.get(s.domain) else {
            push(IssueKind::UnknownDomain);
            continue;
        };
        if s.x.len() != dom.dim {
            push(IssueKind::DimensionMismatch {
                expected: dom.dim,
                got: s.x.len(),
            });
            continue;
        }
        let f = sys.eval_field(s.domain, &s.x);
        if f.iter().any(|v| !v.is_finite()) {
            push(IssueKind::NonFiniteField);
            continue;
        }
        let scale = linalg::norm(&s.x).max(1.0);
        for (gi, g) in sys.guards.iter().enumerate() {
            if g.domain != s.domain {
                continue;
            }
            let level = &*dom.faces[g.face].level;
            if level(&s.x).abs() > ON_FACE_TOL * scale || !sys.guard_active(gi, &s.x) {
                continue;
            }
            rep.guard_checks += 1;
            let (d, ratio) = ode::transversality(&*dom.field, level, &s.x);
            if ratio < TRANSVERSALITY_FLOOR {
                push(IssueKind::Tangent { guard: gi, ratio });
            } else if d >= 0.0 {
                push(IssueKind::NotOutward {
                    guard: gi,
                    derivative: d,
                });
            }
            let post = (g.reset)(&s.x);
            let tdim = sys.domains[g.target].dim;
            if post.len() != tdim {
                push(IssueKind::ResetDimension {
                    guard: gi,
                    expected: tdim,
                    got: post.len(),
                });
                continue;
            }
            let pscale = linalg::norm(&post).max(1.0);
            for (fi, face) in sys.domains[g.target].faces.iter().enumerate() {
                let v = (face.level)(&post);
                if !(v >= -START_SLACK * pscale) {
                    push(IssueKind::ResetOutsideTarget {
                        guard: gi,
                        face: fi,
                        value: v,
                    });
                }
            }
        }
    }
    Ok(rep)
}

/// Append a clock coordinate with unit rate to every domain; resets carry it over.
pub fn augment_with_time(sys: &HybridSystem) -> HybridSystem {
    let mut out = HybridSystem::new(&sys.name);
    for d in &sys.domains {
        let n = d.dim;
        let f = d.field.clone();
        let id = out.add_domain(
            &d.name,
            n + 1,
            field_fn(move |x, dx| {
                f(&x[..n], &mut dx[..n]);
                dx[n] = 1.0;
            }),
        );
        for face in &d.faces {
            let l = face.level.clone();
            out.add_face(id, &face.name, level_fn(move |x| l(&x[..n])));
        }
    }
    for g in &sys.guards {
        let n = sys.domains[g.domain].dim;
        let r = g.reset.clone();
        let gi = out.add_guard(
            &g.name,
            g.domain,
            g.face,
            g.target,
            reset_fn(move |x| {
                let mut y = r(&x[..n]);
                y.push(x[n]);
                y
            }),
        );
        if let Some(p) = g.predicate.clone() {
            out.set_predicate(gi, level_fn(move |x| p(&x[..n])));
        }
    }
    out
}

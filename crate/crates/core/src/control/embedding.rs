//! Controller embedding the lateral leg-spring template in a polyped.
//!
//! Stance limbs are allocated so the body wrench equals the template's leg-spring
//! wrench after cancelling swing reactions; swing feet are driven at constant
//! acceleration to body-frame targets, reached when the template step ends.
//!
//! Closed-loop state: the template state `(p, theta, v, omega)` with `p` the body
//! relative to the virtual foot, then feet relative to the virtual foot (`2n`), feet
//! velocities (`2n`) and the swing accelerations held over the step (`2n`).

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hybrid::{
    execute, execute_until, field_fn, level_fn, reset_fn, ExecutionTrace, Horizon, HybridState,
    HybridSystem, StopReason, StopRule, TransitionEvent,
};
use crate::models::lls::{self, leg_extension_rate, lls_step_from, side_of, LlsParams};
use crate::models::polyped::{limb_wrench, rotate, Allocator, PolypedParams, STANCE_A, STANCE_B};
use crate::numerics::linalg::{self, Mat};
use crate::numerics::ode::IntegratorOptions;
use crate::poincare::ReturnMap;

struct Core {
    polyped: PolypedParams,
    lls: LlsParams,
    opts: IntegratorOptions,
    alloc: [Allocator; 2],
}

impl Core {
    fn n(&self) -> usize {
        self.polyped.n()
    }

    fn feet(&self) -> usize {
        6
    }

    fn vel(&self) -> usize {
        6 + 2 * self.n()
    }

    fn acc(&self) -> usize {
        6 + 4 * self.n()
    }

    /// World-frame limb inputs, two per leg.
    fn inputs(&self, domain: usize, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let th = x[2];
        let (fx, fy, tq) = self.lls.wrench(&x[..6]);
        let fb = rotate(-th, [fx, fy]);
        let mut need = [fb[0], fb[1], tq];
        let mut u = vec![0.0; 2 * n];
        for k in self.polyped.swing(domain) {
            let mk = self.polyped.foot_mass[k];
            let a = [x[self.acc() + 2 * k], x[self.acc() + 2 * k + 1]];
            let uw = [mk * a[0], mk * a[1]];
            let w = limb_wrench(self.polyped.hips[k], rotate(-th, uw));
            for i in 0..3 {
                need[i] -= w[i];
            }
            u[2 * k] = uw[0];
            u[2 * k + 1] = uw[1];
        }
        let al = &self.alloc[domain];
        let ub = al.solve(need);
        for (i, &k) in al.legs.iter().enumerate() {
            let uw = rotate(th, [ub[2 * i], ub[2 * i + 1]]);
            u[2 * k] = uw[0];
            u[2 * k + 1] = uw[1];
        }
        u
    }

    fn field(&self, domain: usize, x: &[f64], dx: &mut [f64]) {
        let n = self.n();
        let th = x[2];
        let u = self.inputs(domain, x);
        let mut w = [0.0; 3];
        for k in 0..n {
            let lw = limb_wrench(self.polyped.hips[k], rotate(-th, [u[2 * k], u[2 * k + 1]]));
            for i in 0..3 {
                w[i] += lw[i];
            }
        }
        let f = rotate(th, [w[0], w[1]]);
        dx[..3].copy_from_slice(&x[3..6]);
        dx[3] = f[0] / self.polyped.m;
        dx[4] = f[1] / self.polyped.m;
        dx[5] = w[2] / self.polyped.j;
        for v in dx[6..].iter_mut() {
            *v = 0.0;
        }
        for k in self.polyped.swing(domain) {
            for c in 0..2 {
                dx[self.feet() + 2 * k + c] = x[self.vel() + 2 * k + c];
                dx[self.vel() + 2 * k + c] = u[2 * k + c] / self.polyped.foot_mass[k];
            }
        }
    }

    /// Swing accelerations for the step starting at `x`.
    fn swing_plan(&self, domain: usize, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let step = lls_step_from(
            &self.lls,
            &HybridState::new(domain, x[..6].to_vec()),
            &self.opts,
        )?;
        let tau = step.duration;
        if !(tau > 0.0) {
            return Err(Error::StepTimeUndefined);
        }
        let mut a = vec![0.0; 2 * n];
        for k in self.polyped.swing(domain) {
            let r = rotate(step.end[2], self.polyped.targets[k]);
            for c in 0..2 {
                let target = step.end[c] + r[c];
                let q = x[self.feet() + 2 * k + c];
                let v = x[self.vel() + 2 * k + c];
                a[2 * k + c] = 2.0 * (target - q - tau * v) / (tau * tau);
            }
        }
        Ok(a)
    }

    fn with_plan(&self, domain: usize, mut x: Vec<f64>) -> Result<Vec<f64>> {
        let a = self.swing_plan(domain, &x)?;
        let off = self.acc();
        x[off..].copy_from_slice(&a);
        Ok(x)
    }

    /// Template touchdown, plastic landing of the swing feet and a fresh swing plan.
    fn reset(&self, domain: usize, pre: &[f64]) -> Result<Vec<f64>> {
        let next = 1 - domain;
        let mut y = pre.to_vec();
        let p = self.lls.touchdown_rel(pre[2], side_of(next));
        let shift = [p[0] - pre[0], p[1] - pre[1]];
        y[0] = p[0];
        y[1] = p[1];
        for k in 0..self.n() {
            y[self.feet() + 2 * k] += shift[0];
            y[self.feet() + 2 * k + 1] += shift[1];
        }
        for k in self.polyped.stance(next) {
            y[self.vel() + 2 * k] = 0.0;
            y[self.vel() + 2 * k + 1] = 0.0;
        }
        self.with_plan(next, y)
    }
}

/// Closed-loop polyped realizing the template on its body.
#[derive(Clone)]
pub struct PolypedEmbedding {
    core: Arc<Core>,
    system: Arc<HybridSystem>,
}

impl core::fmt::Debug for PolypedEmbedding {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PolypedEmbedding")
            .field("legs", &self.core.n())
            .field("lls", &self.core.lls)
            .finish()
    }
}

/// Tight tolerances keep the predicted and realized step ends together.
pub fn embedding_options() -> IntegratorOptions {
    IntegratorOptions {
        rel_tol: 1e-11,
        abs_tol: 1e-13,
        max_step: 0.01,
        ..IntegratorOptions::default()
    }
}

impl PolypedEmbedding {
    pub fn new(polyped: &PolypedParams, lls_params: &LlsParams) -> Result<PolypedEmbedding> {
        Self::with_options(polyped, lls_params, embedding_options())
    }

    pub fn with_options(
        polyped: &PolypedParams,
        lls_params: &LlsParams,
        opts: IntegratorOptions,
    ) -> Result<PolypedEmbedding> {
        lls_params.validate()?;
        let alloc = [
            Allocator::new(polyped, &polyped.stance(STANCE_A))?,
            Allocator::new(polyped, &polyped.stance(STANCE_B))?,
        ];
        polyped.validate()?;
        let core = Arc::new(Core {
            polyped: polyped.clone(),
            lls: *lls_params,
            opts,
            alloc,
        });
        let dim = 6 + 6 * polyped.n();
        let mut sys = HybridSystem::new("embedded polyped");
        for (dom, name) in [(lls::LEFT, "left step"), (lls::RIGHT, "right step")] {
            let c = core.clone();
            sys.add_domain(name, dim, field_fn(move |x, dx| c.field(dom, x, dx)));
        }
        let p = *lls_params;
        for dom in [lls::LEFT, lls::RIGHT] {
            let face = sys.add_face(
                dom,
                "leg length",
                level_fn(move |x| {
                    let h = p.hip_rel(x);
                    p.l * p.l - h[0] * h[0] - h[1] * h[1]
                }),
            );
            let c = core.clone();
            let g = sys.add_guard(
                "step end",
                dom,
                face,
                1 - dom,
                reset_fn(move |x| c.reset(dom, x).unwrap_or_else(|_| vec![f64::NAN; x.len()])),
            );
            sys.set_predicate(g, level_fn(move |x| leg_extension_rate(&p, x)));
        }
        Ok(PolypedEmbedding {
            core,
            system: Arc::new(sys),
        })
    }

    pub fn system(&self) -> &Arc<HybridSystem> {
        &self.system
    }

    pub fn legs(&self) -> usize {
        self.core.n()
    }

    pub fn dim(&self) -> usize {
        6 + 6 * self.core.n()
    }

    pub fn options(&self) -> &IntegratorOptions {
        &self.core.opts
    }

    /// Allocation condition numbers for the two stance sets.
    pub fn allocation_condition(&self) -> [f64; 2] {
        [self.core.alloc[0].condition, self.core.alloc[1].condition]
    }

    /// World-frame limb inputs at a closed-loop state.
    pub fn inputs(&self, x: &HybridState) -> Vec<f64> {
        self.core.inputs(x.domain, &x.x)
    }

    /// Closed-loop state from a template state and limb states relative to the virtual
    /// foot. Stance feet are taken as landed (zero velocity).
    pub fn initial_state(
        &self,
        domain: usize,
        body: &[f64],
        feet: &[f64],
        feet_vel: &[f64],
    ) -> Result<HybridState> {
        let n = self.core.n();
        if body.len() != 6 {
            return Err(Error::DimensionMismatch {
                expected: 6,
                got: body.len(),
            });
        }
        if feet.len() != 2 * n || feet_vel.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: feet.len().min(feet_vel.len()),
            });
        }
        let mut vel = feet_vel.to_vec();
        for k in self.core.polyped.stance(domain) {
            vel[2 * k] = 0.0;
            vel[2 * k + 1] = 0.0;
        }
        let x = [body, feet, &vel, &vec![0.0; 2 * n]].concat();
        Ok(HybridState::new(domain, self.core.with_plan(domain, x)?))
    }

    /// Closed-loop state with every foot at its body-frame target.
    pub fn nominal_state(&self, domain: usize, body: &[f64]) -> Result<HybridState> {
        let n = self.core.n();
        let mut feet = vec![0.0; 2 * n];
        for k in 0..n {
            let r = rotate(body[2], self.core.polyped.targets[k]);
            feet[2 * k] = body[0] + r[0];
            feet[2 * k + 1] = body[1] + r[1];
        }
        self.initial_state(domain, body, &feet, &vec![0.0; 2 * n])
    }

    /// Run `steps` template steps, surfacing prediction failures as errors.
    pub fn run(&self, x0: &HybridState, steps: usize) -> Result<ExecutionTrace> {
        let mut x = x0.clone();
        let mut t = 0.0;
        let mut segments = Vec::new();
        let mut events = Vec::new();
        for _ in 0..steps {
            let tr = execute_until(
                &self.system,
                &x,
                t,
                Horizon::time(50.0),
                StopRule::Guard(x.domain),
                &self.core.opts,
            )
            .map_err(|e| match e {
                Error::EscapeDomain { .. } => Error::StepTimeUndefined,
                other => other,
            })?;
            if tr.stop != StopReason::GuardHit {
                return Err(Error::StepTimeUndefined);
            }
            segments.extend(tr.segments);
            t = tr.final_time;
            let pre = tr.final_state.x;
            let post = self.core.reset(x.domain, &pre)?;
            let to = 1 - x.domain;
            events.push(TransitionEvent {
                time: t,
                guard: x.domain,
                from: x.domain,
                to,
                pre,
                post: post.clone(),
            });
            x = HybridState::new(to, post);
        }
        Ok(ExecutionTrace {
            segments,
            events,
            final_state: x,
            final_time: t,
            stop: StopReason::EventLimit,
        })
    }

    /// The standalone template from the body part of `x0`.
    pub fn template_run(&self, x0: &HybridState, steps: usize) -> Result<ExecutionTrace> {
        let sys = lls::make_lls(&self.core.lls)?;
        let tr = execute(
            &sys,
            &HybridState::new(x0.domain, x0.x[..6].to_vec()),
            Horizon::events(steps, 50.0 * steps as f64),
            &self.core.opts,
        )?;
        if tr.events.len() != steps {
            return Err(Error::StepTimeUndefined);
        }
        Ok(tr)
    }
}

/// Largest difference between the body part of a closed-loop run and a template run:
/// step-end times and template states sampled inside each step.
pub fn body_deviation(
    closed: &ExecutionTrace,
    template: &ExecutionTrace,
    samples_per_step: usize,
) -> Result<f64> {
    if closed.events.len() != template.events.len() {
        return Err(Error::DimensionMismatch {
            expected: template.events.len(),
            got: closed.events.len(),
        });
    }
    let mut dev: f64 = 0.0;
    for (a, b) in closed.events.iter().zip(&template.events) {
        dev = dev.max((a.time - b.time).abs());
        dev = dev.max(linalg::dist(&a.pre[..6], &b.pre));
    }
    let mut start = 0.0;
    for e in &template.events {
        for i in 1..samples_per_step {
            let t = start + (e.time - start) * i as f64 / samples_per_step as f64;
            let x = eval_at(closed, t)?;
            let y = eval_at(template, t)?;
            dev = dev.max(linalg::dist(&x[..6], &y));
        }
        start = e.time;
    }
    Ok(dev)
}

fn eval_at(tr: &ExecutionTrace, t: f64) -> Result<Vec<f64>> {
    tr.segments
        .iter()
        .find(|s| s.t_start() <= t && t <= s.t_end())
        .map(|s| s.eval(t))
        .ok_or_else(|| Error::InvalidInput("time outside the trace".into()))
}

/// Two-step return map of the closed loop in coordinates
/// `(theta, vx, vy, omega | feet, feet velocities)` at the start of a left step.
pub struct PolypedStrideMap<'a> {
    pub embedding: &'a PolypedEmbedding,
    pub fd_step: Option<f64>,
}

impl<'a> PolypedStrideMap<'a> {
    pub fn new(embedding: &'a PolypedEmbedding) -> Self {
        PolypedStrideMap {
            embedding,
            fd_step: Some(1e-4),
        }
    }

    /// Number of template coordinates; the rest are limb coordinates.
    pub const BODY: usize = 4;

    pub fn state(&self, s: &[f64]) -> Result<HybridState> {
        let c = &self.embedding.core;
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: s.len(),
            });
        }
        let body = c.lls.step_start(1.0, &s[..4]);
        let n = c.n();
        let x = [&body[..], &s[4..], &vec![0.0; 2 * n]].concat();
        Ok(HybridState::new(lls::LEFT, c.with_plan(lls::LEFT, x)?))
    }

    pub fn coords(x: &HybridState, n: usize) -> Vec<f64> {
        [&x.x[2..6], &x.x[6..6 + 4 * n]].concat()
    }

    /// Block of the Jacobian mapping limb inputs to limb outputs.
    pub fn limb_block(j: &Mat) -> Mat {
        let b = Self::BODY;
        j.view((b, b), (j.nrows() - b, j.ncols() - b)).into_owned()
    }

    /// Block mapping limb inputs to template outputs.
    pub fn cross_block(j: &Mat) -> Mat {
        let b = Self::BODY;
        j.view((0, b), (b, j.ncols() - b)).into_owned()
    }
}

impl ReturnMap for PolypedStrideMap<'_> {
    fn dim(&self) -> usize {
        4 + 4 * self.embedding.legs()
    }

    fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        let tr = self.embedding.run(&self.state(s)?, 2)?;
        Ok(Self::coords(&tr.final_state, self.embedding.legs()))
    }

    fn fd_step(&self) -> Option<f64> {
        self.fd_step
    }

    fn min_domain_dim(&self) -> usize {
        self.embedding.dim()
    }
}

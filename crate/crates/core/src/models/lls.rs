//! Lateral leg-spring template: a planar rigid body on a massless linear leg spring
//! attached at a hip offset `d` along the body axis, alternating left and right feet.
//!
//! State `(px, py, theta, vx, vy, omega)` where `(px, py)` is the body centre minus
//! the current foot position.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hybrid::{
    execute_until, field_fn, level_fn, reset_fn, Horizon, HybridState, HybridSystem, StopReason,
    StopRule,
};
use crate::numerics::ode::IntegratorOptions;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Approximate left-step start `(theta, vx, vy, omega)` of the symmetric gait for the
/// default parameters.
pub const DEFAULT_GAIT: [f64; 4] = [0.0584, 0.9418, 0.4781, -0.1292];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LlsParams {
    pub m: f64,
    pub j: f64,
    /// Hip position along the body axis, relative to the centre of mass.
    pub d: f64,
    pub l: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LlsParams {
    fn default() -> Self {
        LlsParams {
            m: 1.0,
            j: 0.816,
            d: -0.25,
            l: 1.0,
            beta: 1.0,
            k: 3.52,
        }
    }
}

impl LlsParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.m, self.j, self.l, self.k];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !self.d.is_finite() {
            return Err(Error::InvalidInput(
                "LLS masses, lengths and stiffness must be positive".into(),
            ));
        }
        if !(self.beta > 0.0 && self.beta < core::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidInput(
                "touchdown angle must lie in (0, pi/2)".into(),
            ));
        }
        Ok(())
    }

    /// Hip offset in world axes for heading `theta`.
    pub fn hip_arm(&self, theta: f64) -> [f64; 2] {
        [self.d * theta.cos(), self.d * theta.sin()]
    }

    /// Hip position relative to the foot.
    pub fn hip_rel(&self, s: &[f64]) -> [f64; 2] {
        let r = self.hip_arm(s[2]);
        [s[0] + r[0], s[1] + r[1]]
    }

    /// Leg force on the body and its moment about the centre of mass.
    pub fn wrench(&self, s: &[f64]) -> (f64, f64, f64) {
        let h = self.hip_rel(s);
        let eta = h[0].hypot(h[1]);
        let mag = self.k * (self.l - eta) / eta;
        let (fx, fy) = (mag * h[0], mag * h[1]);
        let r = self.hip_arm(s[2]);
        (fx, fy, r[0] * fy - r[1] * fx)
    }

    pub fn energy(&self, s: &[f64]) -> f64 {
        let h = self.hip_rel(s);
        let eta = h[0].hypot(h[1]);
        0.5 * self.m * (s[3] * s[3] + s[4] * s[4])
            + 0.5 * self.j * s[5] * s[5]
            + 0.5 * self.k * (eta - self.l).powi(2)
    }

    /// Foot-relative position at touchdown of a foot on `side` (+1 left, -1 right).
    pub fn touchdown_rel(&self, theta: f64, side: f64) -> [f64; 2] {
        let r = self.hip_arm(theta);
        let a = theta + side * self.beta;
        [-r[0] - self.l * a.cos(), -r[1] - self.l * a.sin()]
    }

    /// Full state at the start of a step from `(theta, vx, vy, omega)`.
    pub fn step_start(&self, side: f64, z: &[f64]) -> Vec<f64> {
        let p = self.touchdown_rel(z[0], side);
        vec![p[0], p[1], z[0], z[1], z[2], z[3]]
    }
}

pub fn side_of(domain: usize) -> f64 {
    if domain == LEFT {
        1.0
    } else {
        -1.0
    }
}

/// Rate of change of `|hip - foot|^2 / 2`.
pub fn leg_extension_rate(p: &LlsParams, s: &[f64]) -> f64 {
    let h = p.hip_rel(s);
    let r = p.hip_arm(s[2]);
    let vh = [s[3] - s[5] * r[1], s[4] + s[5] * r[0]];
    h[0] * vh[0] + h[1] * vh[1]
}

pub fn make_lls(p: &LlsParams) -> Result<HybridSystem> {
    p.validate()?;
    let p = *p;
    let mut s = HybridSystem::new("lls");
    let field = move |x: &[f64], dx: &mut [f64]| {
        let (fx, fy, tq) = p.wrench(x);
        dx[0] = x[3];
        dx[1] = x[4];
        dx[2] = x[5];
        dx[3] = fx / p.m;
        dx[4] = fy / p.m;
        dx[5] = tq / p.j;
    };
    let left = s.add_domain("left stance", 6, field_fn(field));
    let right = s.add_domain("right stance", 6, field_fn(field));
    for (dom, next) in [(left, right), (right, left)] {
        let face = s.add_face(
            dom,
            "leg length",
            level_fn(move |x| {
                let h = p.hip_rel(x);
                p.l * p.l - h[0] * h[0] - h[1] * h[1]
            }),
        );
        let side = side_of(next);
        let g = s.add_guard(
            "touchdown",
            dom,
            face,
            next,
            reset_fn(move |x| {
                let q = p.touchdown_rel(x[2], side);
                vec![q[0], q[1], x[2], x[3], x[4], x[5]]
            }),
        );
        s.set_predicate(g, level_fn(move |x| leg_extension_rate(&p, x)));
    }
    Ok(s)
}

/// Reflection across the body's initial heading axis; exchanges left and right.
pub fn mirror(s: &[f64]) -> Vec<f64> {
    vec![s[0], -s[1], -s[2], s[3], -s[4], -s[5]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlsStep {
    pub duration: f64,
    /// `(theta, vx, vy, omega)` at liftoff.
    pub z_end: Vec<f64>,
    /// Full pre-reset state at liftoff.
    pub end: Vec<f64>,
}

/// Run one stance phase from `(theta, vx, vy, omega)` with the foot on `side`.
pub fn lls_step(p: &LlsParams, side: f64, z: &[f64], opts: &IntegratorOptions) -> Result<LlsStep> {
    let dom = if side > 0.0 { LEFT } else { RIGHT };
    lls_step_from(p, &HybridState::new(dom, p.step_start(side, z)), opts)
}

/// Run the stance phase containing the full state `x0` to its end.
pub fn lls_step_from(p: &LlsParams, x0: &HybridState, opts: &IntegratorOptions) -> Result<LlsStep> {
    let sys = make_lls(p)?;
    let tr = execute_until(
        &sys,
        x0,
        0.0,
        Horizon::time(50.0),
        StopRule::Guard(x0.domain),
        opts,
    )
    .map_err(|e| match e {
        Error::EscapeDomain { .. } => Error::StepTimeUndefined,
        other => other,
    })?;
    if tr.stop != StopReason::GuardHit {
        return Err(Error::StepTimeUndefined);
    }
    let end = tr.final_state.x;
    Ok(LlsStep {
        duration: tr.final_time,
        z_end: vec![end[2], end[3], end[4], end[5]],
        end,
    })
}

/// Left step followed by a right step.
pub fn lls_stride(p: &LlsParams, z: &[f64], opts: &IntegratorOptions) -> Result<Vec<f64>> {
    let a = lls_step(p, 1.0, z, opts)?;
    Ok(lls_step(p, -1.0, &a.z_end, opts)?.z_end)
}

/// States on the liftoff guards with the leg extending.
pub fn guard_samples<R: Rng>(p: &LlsParams, n: usize, rng: &mut R) -> Vec<HybridState> {
    (0..n)
        .map(|i| {
            let th = rng.random_range(-0.5..0.5);
            let phi = rng.random_range(0.0..core::f64::consts::TAU);
            let r = p.hip_arm(th);
            let mut s = vec![
                p.l * phi.cos() - r[0],
                p.l * phi.sin() - r[1],
                th,
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-0.5..0.5),
            ];
            if leg_extension_rate(p, &s) < 0.0 {
                for v in &mut s[3..] {
                    *v = -*v;
                }
            }
            HybridState::new(i % 2, s)
        })
        .collect()
}

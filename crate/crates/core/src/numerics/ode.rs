//! Dormand-Prince 5(4) integration with dense output and event location.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Autonomous vector field written into the output slice.
pub type FieldRef<'a> = &'a dyn Fn(&[f64], &mut [f64]);

/// Scalar function on the state.
pub type LevelRef<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Below this ratio a crossing is considered tangential.
pub const TRANSVERSALITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// When set, steps have this exact length and no error control is done.
    pub fixed_step: Option<f64>,
    pub event_tol: f64,
    pub max_events_per_step: usize,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: 0.05,
            min_step: 1e-13,
            fixed_step: None,
            event_tol: 1e-12,
            max_events_per_step: 16,
            max_steps: 20_000_000,
        }
    }
}

impl IntegratorOptions {
    /// Fixed-step mode; the flow map is then a smooth function of the initial state,
    /// which is what finite-difference Jacobians need.
    pub fn fixed(h: f64) -> Self {
        IntegratorOptions {
            fixed_step: Some(h),
            max_step: h,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.min_step > 0.0
            && self.event_tol > 0.0
            && self
                .fixed_step
                .map(|h| h > 0.0 && h.is_finite())
                .unwrap_or(true);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "integrator tolerances must be positive".into(),
            ))
        }
    }
}

/// Piecewise cubic Hermite interpolant of one flow arc.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseSegment {
    pub domain: usize,
    pub dim: usize,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
}

impl DenseSegment {
    pub fn new(domain: usize, dim: usize) -> Self {
        DenseSegment {
            domain,
            dim,
            t: Vec::new(),
            x: Vec::new(),
            dx: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, x: &[f64], dx: &[f64]) {
        self.t.push(t);
        self.x.extend_from_slice(x);
        self.dx.extend_from_slice(dx);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t.first().copied().unwrap_or(0.0)
    }

    pub fn t_end(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn knot(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn knot_rate(&self, i: usize) -> &[f64] {
        &self.dx[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.knot(0)
    }

    pub fn last(&self) -> &[f64] {
        self.knot(self.len() - 1)
    }

    /// Interpolated state; `t` is clamped to the segment.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out, None);
        out
    }

    /// State and rate at `t`.
    pub fn eval_with_rate(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; self.dim];
        let mut dx = vec![0.0; self.dim];
        self.eval_into(t, &mut x, Some(&mut dx));
        (x, dx)
    }

    fn eval_into(&self, t: f64, out: &mut [f64], rate: Option<&mut [f64]>) {
        let n = self.len();
        if n == 1 {
            out.copy_from_slice(self.knot(0));
            if let Some(r) = rate {
                r.copy_from_slice(self.knot_rate(0));
            }
            return;
        }
        let t = t.max(self.t[0]).min(self.t[n - 1]);
        let i = self.t.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let (x0, x1) = (self.knot(i), self.knot(i + 1));
        let (d0, d1) = (self.knot_rate(i), self.knot_rate(i + 1));
        if h <= 0.0 {
            out.copy_from_slice(x1);
            if let Some(r) = rate {
                r.copy_from_slice(d1);
            }
            return;
        }
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for k in 0..self.dim {
            out[k] = h00 * x0[k] + h10 * h * d0[k] + h01 * x1[k] + h11 * h * d1[k];
        }
        if let Some(r) = rate {
            let g00 = (6.0 * s2 - 6.0 * s) / h;
            let g10 = 3.0 * s2 - 4.0 * s + 1.0;
            let g01 = (-6.0 * s2 + 6.0 * s) / h;
            let g11 = 3.0 * s2 - 2.0 * s;
            for k in 0..self.dim {
                r[k] = g00 * x0[k] + g10 * d0[k] + g01 * x1[k] + g11 * d1[k];
            }
        }
    }
}

/// What an integration is watching for.
#[derive(Clone, Copy)]
pub struct Watch<'a> {
    pub func: LevelRef<'a>,
    /// `None`: a domain face, triggered when the value turns negative.
    /// `Some(a)`: a section-like level, armed once the value exceeds `a`,
    /// then triggered when it drops to zero.
    pub arm: Option<f64>,
}

impl<'a> Watch<'a> {
    pub fn face(func: LevelRef<'a>) -> Self {
        Watch { func, arm: None }
    }

    pub fn armed(func: LevelRef<'a>, threshold: f64) -> Self {
        Watch {
            func,
            arm: Some(threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub watch: usize,
    pub t: f64,
    pub x: Vec<f64>,
    /// Other watches whose own crossing lies within `event_tol` of this one.
    pub coincident: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub segment: DenseSegment,
    pub crossing: Option<Crossing>,
    pub t_end: f64,
    pub x_end: Vec<f64>,
}

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<'a> {
    f: FieldRef<'a>,
    n: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(f: FieldRef<'a>, n: usize) -> Self {
        let z = || vec![0.0; n];
        Stepper {
            f,
            n,
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
        }
    }

    /// One step of size `h` from `x` with `k1 = f(x)`. Writes the new state into `out`
    /// and leaves `f(out)` in `self.k[6]`. Returns the scaled error norm when asked.
    fn step(
        &mut self,
        x: &[f64],
        k1: &[f64],
        h: f64,
        out: &mut [f64],
        tol: Option<(f64, f64)>,
    ) -> f64 {
        let n = self.n;
        self.k[0].copy_from_slice(k1);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * self.k[j][i];
                }
                self.tmp[i] = x[i] + h * acc;
            }
            if s == 6 {
                out.copy_from_slice(&self.tmp);
            }
            (self.f)(&self.tmp, &mut self.k[s]);
        }
        match tol {
            None => 0.0,
            Some((rtol, atol)) => {
                let mut acc = 0.0;
                for i in 0..n {
                    let mut e = 0.0;
                    for s in 0..7 {
                        e += E[s] * self.k[s][i];
                    }
                    let sc = atol + rtol * x[i].abs().max(out[i].abs());
                    let r = h * e / sc;
                    acc += r * r;
                }
                (acc / n.max(1) as f64).sqrt()
            }
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite())
}

/// Integrate from `(t0, x0)` until `t_max` or the first triggered watch.
///
/// The crossing time is found by Illinois iteration on the length of a fresh step
/// from the last accepted state, so it is resolved to round-off.
pub fn integrate(
    field: FieldRef<'_>,
    x0: &[f64],
    t0: f64,
    t_max: f64,
    watches: &[Watch<'_>],
    opts: &IntegratorOptions,
    domain: usize,
) -> Result<FlowResult> {
    opts.validate()?;
    let n = x0.len();
    let mut st = Stepper::new(field, n);
    let mut x = x0.to_vec();
    let mut fx = vec![0.0; n];
    field(&x, &mut fx);
    if !all_finite(&fx) || !all_finite(&x) {
        return Err(Error::EvaluationFailure { t: t0, point: x });
    }
    let mut seg = DenseSegment::new(domain, n);
    seg.push(t0, &x, &fx);
    let mut t = t0;
    let mut wv: Vec<f64> = watches.iter().map(|w| (w.func)(&x)).collect();
    let mut armed: Vec<bool> = watches
        .iter()
        .zip(&wv)
        .map(|(w, &v)| w.arm.map(|a| v > a).unwrap_or(true))
        .collect();

    // A face that is already violated with outward motion fires immediately.
    let mut h = match opts.fixed_step {
        Some(h) => h,
        None => {
            let nx = crate::numerics::linalg::norm(&x).max(1.0);
            let nf = crate::numerics::linalg::norm(&fx).max(1e-12);
            (0.01 * nx / nf)
                .min(opts.max_step)
                .max(opts.min_step * 10.0)
        }
    };
    let mut xn = vec![0.0; n];
    let mut steps = 0usize;
    while t < t_max {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepFailure { t });
        }
        let remaining = t_max - t;
        let last = h >= remaining;
        let hh = if last { remaining } else { h };
        let err = if opts.fixed_step.is_some() {
            st.step(&x, &fx, hh, &mut xn, None);
            0.0
        } else {
            st.step(&x, &fx, hh, &mut xn, Some((opts.rel_tol, opts.abs_tol)))
        };
        if !all_finite(&xn) || !all_finite(&st.k[6]) {
            if opts.fixed_step.is_some() || hh <= opts.min_step {
                return Err(Error::EvaluationFailure { t, point: x });
            }
            h = hh * 0.25;
            continue;
        }
        if opts.fixed_step.is_none() && err > 1.0 {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h = hh * fac;
            if h < opts.min_step {
                return Err(Error::StepFailure { t });
            }
            continue;
        }
        // Accepted step: check watches.
        let wn: Vec<f64> = watches.iter().map(|w| (w.func)(&xn)).collect();
        let mut triggered: Vec<usize> = Vec::new();
        for (i, w) in watches.iter().enumerate() {
            let fire = match w.arm {
                None => wn[i] < 0.0 || (wv[i] > 0.0 && wn[i] <= 0.0),
                Some(_) => armed[i] && wn[i] <= 0.0,
            };
            if fire {
                triggered.push(i);
            }
        }
        if !triggered.is_empty() {
            let mut roots: Vec<(usize, f64)> = Vec::new();
            for &i in &triggered {
                let s = locate(&mut st, &x, &fx, hh, watches[i].func, wv[i]);
                roots.push((i, s));
            }
            roots.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));
            let (wi, s) = roots[0];
            let coincident = roots[1..]
                .iter()
                .filter(|(_, r)| (r - s).abs() <= opts.event_tol)
                .map(|(i, _)| *i)
                .collect();
            let mut xe = vec![0.0; n];
            if s > 0.0 {
                st.step(&x, &fx, s, &mut xe, None);
                let fe = st.k[6].clone();
                seg.push(t + s, &xe, &fe);
            } else {
                xe.copy_from_slice(&x);
            }
            let te = t + s;
            return Ok(FlowResult {
                segment: seg,
                crossing: Some(Crossing {
                    watch: wi,
                    t: te,
                    x: xe.clone(),
                    coincident,
                }),
                t_end: te,
                x_end: xe,
            });
        }
        for i in 0..watches.len() {
            if let Some(a) = watches[i].arm {
                if wn[i] > a {
                    armed[i] = true;
                }
            }
        }
        wv = wn;
        t = if last { t_max } else { t + hh };
        x.copy_from_slice(&xn);
        fx.copy_from_slice(&st.k[6]);
        seg.push(t, &x, &fx);
        if opts.fixed_step.is_none() {
            let fac = if err <= 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (hh * fac).min(opts.max_step);
            if last {
                h = h.max(hh);
            }
        }
    }
    Ok(FlowResult {
        segment: seg,
        crossing: None,
        t_end: t,
        x_end: x,
    })
}

/// Smallest step length `s` in `(0, h]` with `w(step(x, s)) <= 0`, resolved to round-off.
fn locate(st: &mut Stepper<'_>, x: &[f64], fx: &[f64], h: f64, w: LevelRef<'_>, w0: f64) -> f64 {
    if w0 <= 0.0 {
        return 0.0;
    }
    let n = x.len();
    let mut buf = vec![0.0; n];
    let mut eval = |s: f64, st: &mut Stepper<'_>| {
        st.step(x, fx, s, &mut buf, None);
        w(&buf)
    };
    let (mut a, mut fa) = (0.0, w0);
    let (mut b, mut fb) = (h, eval(h, st));
    if fb > 0.0 {
        // Fired on a strict sign test that the fresh step no longer reproduces.
        return h;
    }
    let mut side = 0i32;
    for _ in 0..200 {
        if b - a <= 4.0 * f64::EPSILON * h.max(1e-300) || fb == 0.0 {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = eval(c, st);
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    b
}

/// Directional derivative of `w` along the field divided by the gradient norm.
/// Small values mean the flow is nearly tangent to the level set.
pub fn transversality(field: FieldRef<'_>, w: LevelRef<'_>, x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mut f = vec![0.0; n];
    field(x, &mut f);
    let nf = crate::numerics::linalg::norm(&f);
    let scale = crate::numerics::linalg::norm(x).max(1.0);
    let eps = 1e-6 * scale;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        xp[i] = x[i] + eps;
        xm[i] = x[i] - eps;
        grad[i] = (w(&xp) - w(&xm)) / (2.0 * eps);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    let ng = crate::numerics::linalg::norm(&grad);
    let d = crate::numerics::linalg::dot(&grad, &f);
    if ng == 0.0 || nf == 0.0 {
        return (d, 0.0);
    }
    (d, d.abs() / (ng * nf))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    pub guard: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub segment: DenseSegment,
}

/// Integrate until the first guard function turns non-positive.
pub fn integrate_to_event(
    field: FieldRef<'_>,
    guards: &[LevelRef<'_>],
    x0: &[f64],
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<EventHit> {
    let watches: Vec<Watch<'_>> = guards.iter().map(|g| Watch::face(*g)).collect();
    let r = integrate(field, x0, 0.0, t_max, &watches, opts, 0)?;
    let c = r.crossing.ok_or(Error::NoEventBeforeTmax { t_max })?;
    let (d, ratio) = transversality(field, guards[c.watch], &c.x);
    if ratio < TRANSVERSALITY_FLOOR || d >= 0.0 {
        return Err(Error::TangentialCrossing {
            watch: c.watch,
            t: c.t,
            ratio,
        });
    }
    Ok(EventHit {
        guard: c.watch,
        t: c.t,
        x: c.x,
        segment: r.segment,
    })
}

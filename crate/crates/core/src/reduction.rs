//! Exact and approximate reduction near periodic orbits, glued trajectories,
//! asymptotic phase and isochrons.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hybrid::{execute_until, ExecutionTrace, Horizon, HybridState, HybridSystem, StopRule};
use crate::numerics::linalg::{self, Mat};
use crate::numerics::ode::{DenseSegment, IntegratorOptions};
use crate::poincare::{
    constant_rank_certificate, iterate, map_rank, summarize_jacobian, CertificateReport,
    PeriodicOrbit, PoincareMapHandle, ReturnMap, SpectralSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    ExactCertified,
    ApproximateOnly,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionOptions {
    pub radius: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub rank_tol: f64,
    /// Size of the kernel perturbations and of the profile's initial deviation.
    pub magnitude: f64,
    pub cycles: usize,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions {
            radius: 0.05,
            n_samples: 16,
            seed: 0,
            rank_tol: linalg::RANK_TOL,
            magnitude: 1e-3,
            cycles: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReductionReport {
    pub verdict: Verdict,
    /// Section dimension of the reduced subsystem.
    pub r: usize,
    pub m: usize,
    pub rank_profile: Vec<usize>,
    pub spectral_radius: f64,
    pub certificate: CertificateReport,
    pub summary: SpectralSummary,
    pub fiber: FiberResiduals,
    pub profile: ContractionProfile,
}

/// Certify exact reduction from a constant-rank test on `DP^m`, falling back to the
/// approximate statement when the orbit is merely exponentially stable.
pub fn analyze_reduction(
    map: &dyn ReturnMap,
    xi: &[f64],
    opts: &ReductionOptions,
) -> Result<ReductionReport> {
    let dp = map.jacobian(xi)?;
    let summary = summarize_jacobian(&dp, map.min_domain_dim(), opts.rank_tol)?;
    let m = summary.m.max(1);
    let certificate = constant_rank_certificate(
        map,
        xi,
        opts.radius,
        opts.n_samples,
        m,
        opts.seed,
        opts.rank_tol,
    )?;
    let spectral_radius = summary
        .eigenvalues
        .first()
        .map(|e| e.modulus())
        .unwrap_or(0.0);
    let dpm = linalg::mat_pow(&dp, m);
    let rm = map_rank(&dpm, opts.rank_tol)?;
    let (range, kernel) = linalg::split_bases(&dpm, rm)?;
    let directions: Vec<Vec<f64>> = kernel
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let fiber = fiber_collapse_test(map, xi, &directions, opts.magnitude, m)?;
    // Start the profile off both the range and the kernel of DP^m.
    let mut e = vec![0.0; xi.len()];
    for c in range
        .column_iter()
        .take(1)
        .chain(kernel.column_iter().take(1))
    {
        for (ei, ci) in e.iter_mut().zip(c.iter()) {
            *ei += ci;
        }
    }
    let ne = linalg::norm(&e).max(f64::MIN_POSITIVE);
    let x0: Vec<f64> = xi
        .iter()
        .zip(&e)
        .map(|(a, b)| a + opts.magnitude * b / ne)
        .collect();
    let profile = contraction_profile(map, xi, &x0, opts.cycles, opts.rank_tol)?;
    let (verdict, r) = if certificate.holds {
        (Verdict::ExactCertified, certificate.rank_k_at_xi)
    } else if spectral_radius < 1.0 {
        (Verdict::ApproximateOnly, rm)
    } else {
        (Verdict::Inconclusive, rm)
    };
    Ok(ReductionReport {
        verdict,
        r,
        m,
        rank_profile: summary.ranks.clone(),
        spectral_radius,
        certificate,
        summary,
        fiber,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiberResiduals {
    pub magnitude: f64,
    pub iterates: usize,
    pub residuals: Vec<f64>,
    pub max: f64,
}

/// `|P^m(x + magnitude d) - P^m(x)|` for each direction `d` (normalized).
pub fn fiber_collapse_test(
    map: &dyn ReturnMap,
    base: &[f64],
    directions: &[Vec<f64>],
    magnitude: f64,
    m: usize,
) -> Result<FiberResiduals> {
    let reference = iterate(map, base, m)?;
    let mut residuals = Vec::with_capacity(directions.len());
    for d in directions {
        if d.len() != base.len() {
            return Err(Error::DimensionMismatch {
                expected: base.len(),
                got: d.len(),
            });
        }
        let nd = linalg::norm(d);
        if nd == 0.0 {
            return Err(Error::InvalidInput("zero fiber direction".into()));
        }
        let x: Vec<f64> = base
            .iter()
            .zip(d)
            .map(|(b, v)| b + magnitude * v / nd)
            .collect();
        residuals.push(linalg::dist(&iterate(map, &x, m)?, &reference));
    }
    let max = residuals.iter().copied().fold(0.0, f64::max);
    Ok(FiberResiduals {
        magnitude,
        iterates: m,
        residuals,
        max,
    })
}

/// Splitting of the section tangent space into the range and kernel of `A^n`
/// (the Fitting decomposition of `A = DP(xi)`).
#[derive(Debug, Clone)]
pub struct FittingSplit {
    pub tangential: Mat,
    pub transverse: Mat,
    solve: Mat,
}

impl FittingSplit {
    pub fn new(a: &Mat, rank_tol: f64) -> Result<FittingSplit> {
        linalg::check_square(a)?;
        let n = a.nrows();
        let an = linalg::mat_pow(a, n);
        let r = map_rank(&an, rank_tol)?;
        let (tangential, transverse) = linalg::split_bases(&an, r)?;
        let mut basis = Mat::zeros(n, n);
        basis.view_mut((0, 0), (n, r)).copy_from(&tangential);
        basis.view_mut((0, r), (n, n - r)).copy_from(&transverse);
        let solve = linalg::pinv(&basis, 1e-14)?;
        Ok(FittingSplit {
            tangential,
            transverse,
            solve,
        })
    }

    /// `(tangential part, transverse part)` of a deviation.
    pub fn split(&self, e: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.tangential.ncols();
        let c = linalg::mat_vec(&self.solve, e);
        let t = linalg::mat_vec(&self.tangential, &c[..r]);
        let k = linalg::mat_vec(&self.transverse, &c[r..]);
        (t, k)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContractionProfile {
    pub total: Vec<f64>,
    pub transverse: Vec<f64>,
    pub tangential: Vec<f64>,
    pub transverse_ratios: Vec<Option<f64>>,
    pub tangential_ratios: Vec<Option<f64>>,
    /// Per-cycle tangential rate fitted in log space.
    pub fitted_rate: Option<f64>,
    /// Cycle at which the deviation fell to round-off and iteration stopped.
    pub truncated_at: Option<usize>,
}

fn ratios(v: &[f64]) -> Vec<Option<f64>> {
    v.windows(2)
        .map(|w| if w[0] > 0.0 { Some(w[1] / w[0]) } else { None })
        .collect()
}

/// Iterate `x0` and split each deviation from `xi` into tangential and transverse parts.
pub fn contraction_profile(
    map: &dyn ReturnMap,
    xi: &[f64],
    x0: &[f64],
    cycles: usize,
    rank_tol: f64,
) -> Result<ContractionProfile> {
    let a = map.jacobian(xi)?;
    let split = FittingSplit::new(&a, rank_tol)?;
    let floor = 1e2 * f64::EPSILON * linalg::norm(xi).max(1.0);
    let mut total = Vec::new();
    let mut transverse = Vec::new();
    let mut tangential = Vec::new();
    let mut x = x0.to_vec();
    let mut truncated_at = None;
    for k in 0..=cycles {
        let e: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
        let ne = linalg::norm(&e);
        if ne < floor {
            truncated_at = Some(k);
            break;
        }
        let (t, n) = split.split(&e);
        total.push(ne);
        tangential.push(linalg::norm(&t));
        transverse.push(linalg::norm(&n));
        if k < cycles {
            x = map.apply(&x)?;
        }
    }
    let pts: Vec<(f64, f64)> = tangential
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > floor)
        .map(|(i, &v)| (i as f64, v.ln()))
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some((sxy / sxx).exp())
    } else {
        None
    };
    Ok(ContractionProfile {
        transverse_ratios: ratios(&transverse),
        tangential_ratios: ratios(&tangential),
        total,
        transverse,
        tangential,
        fitted_rate,
        truncated_at,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stitch {
    pub time: f64,
    pub guard: usize,
    pub pre: HybridState,
    pub post: HybridState,
}

/// An execution viewed as one path in global time: resets are stitch points where
/// the pre- and post-reset states are identified.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedPath {
    pub start: f64,
    pub duration: f64,
    pub stitches: Vec<Stitch>,
    pub segments: Vec<DenseSegment>,
}

impl GluedPath {
    /// Chart-tagged state at global time `t`; right-continuous at stitches.
    pub fn eval(&self, t: f64) -> HybridState {
        let idx = self
            .segments
            .iter()
            .rposition(|s| s.t_start() <= t)
            .unwrap_or(0);
        let s = &self.segments[idx];
        HybridState::new(s.domain, s.eval(t))
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

pub fn glued_trajectory(trace: &ExecutionTrace) -> GluedPath {
    let start = trace.start_time();
    let stitches = trace
        .events
        .iter()
        .map(|e| Stitch {
            time: e.time,
            guard: e.guard,
            pre: HybridState::new(e.from, e.pre.clone()),
            post: HybridState::new(e.to, e.post.clone()),
        })
        .collect();
    GluedPath {
        start,
        duration: trace.final_time - start,
        stitches,
        segments: trace.segments.clone(),
    }
}

/// Reference orbit over one period plus what is needed to assign asymptotic phase.
#[derive(Clone)]
pub struct PhaseMap {
    pub system: Arc<HybridSystem>,
    pub opts: IntegratorOptions,
    pub period: f64,
    pub base: HybridState,
    pub reference: GluedPath,
    /// `(time, domain)` of the coarse lookup table.
    samples: Vec<(f64, usize, Vec<f64>)>,
    pub settle_cycles: usize,
    /// Largest accepted distance between a settled state and the reference orbit.
    pub tolerance: f64,
}

pub const PHASE_SAMPLES: usize = 1024;

/// Phase accuracy demanded of isochron points.
pub const ISOCHRON_PHASE_TOL: f64 = 1e-6;

impl PhaseMap {
    pub fn build(handle: &PoincareMapHandle, orbit: &PeriodicOrbit) -> Result<PhaseMap> {
        let (ret, tr) = handle.first_return_trace(&orbit.state.x)?;
        let reference = glued_trajectory(&tr);
        let period = ret.time;
        let samples = (0..PHASE_SAMPLES)
            .map(|i| {
                let t = period * i as f64 / PHASE_SAMPLES as f64;
                let s = reference.eval(t);
                (t, s.domain, s.x)
            })
            .collect();
        Ok(PhaseMap {
            system: handle.system.clone(),
            opts: IntegratorOptions::default(),
            period,
            base: orbit.state.clone(),
            reference,
            samples,
            settle_cycles: 20,
            tolerance: 1e-3,
        })
    }

    /// Point of the reference orbit at phase `theta`.
    pub fn orbit_point(&self, theta: f64) -> HybridState {
        self.reference
            .eval(linalg::rem_euclid(theta, TAU) / TAU * self.period)
    }

    /// Reference time in `[0, period)` of the orbit point nearest `x`, and the distance.
    fn nearest(&self, x: &HybridState) -> Option<(f64, f64)> {
        let (mut best, mut bd) = (None, f64::INFINITY);
        for (i, (_, d, y)) in self.samples.iter().enumerate() {
            if *d == x.domain && y.len() == x.x.len() {
                let v = linalg::dist(y, &x.x);
                if v < bd {
                    bd = v;
                    best = Some(i);
                }
            }
        }
        let i = best?;
        let t0 = self.samples[i].0;
        let seg = self
            .reference
            .segments
            .iter()
            .filter(|s| s.domain == x.domain)
            .find(|s| s.t_start() <= t0 && t0 <= s.t_end())?;
        let dt = self.period / PHASE_SAMPLES as f64;
        let lo = (t0 - dt).max(seg.t_start());
        let hi = (t0 + dt).min(seg.t_end());
        // Stationarity of the squared distance: (g(s) - x) . g'(s) = 0.
        let h = |s: f64| {
            let (g, dg) = seg.eval_with_rate(s);
            g.iter()
                .zip(&x.x)
                .zip(&dg)
                .map(|((a, b), c)| (a - b) * c)
                .sum::<f64>()
        };
        let dist_at = |s: f64| linalg::dist(&seg.eval(s), &x.x);
        let (mut a, mut b) = (lo, hi);
        let (mut fa, fb) = (h(a), h(b));
        let s = if fa <= 0.0 && fb >= 0.0 {
            for _ in 0..100 {
                let c = 0.5 * (a + b);
                let fc = h(c);
                if fc <= 0.0 {
                    a = c;
                    fa = fc;
                } else {
                    b = c;
                }
                if b - a < 1e-15 * self.period.max(1.0) {
                    break;
                }
            }
            let _ = fa;
            0.5 * (a + b)
        } else if dist_at(lo) < dist_at(hi) {
            lo
        } else {
            hi
        };
        Some((linalg::rem_euclid(s, self.period), dist_at(s)))
    }

    /// Asymptotic phase in `[0, 2 pi)`: settle for whole periods, then read off the
    /// phase of the nearest reference point.
    pub fn phase_of(&self, x: &HybridState, settle_cycles: usize) -> Result<f64> {
        let mut last = f64::INFINITY;
        // Near a reset the settled state and its nearest orbit point can sit in
        // different domains; nudging the settle time sidesteps that.
        for extra in [0.0, 0.125, 0.375] {
            let t = (settle_cycles as f64 + extra) * self.period;
            let tr = execute_until(
                &self.system,
                x,
                0.0,
                Horizon::time(t),
                StopRule::None,
                &self.opts,
            )?;
            if let Some((s, d)) = self.nearest(&tr.final_state) {
                if d <= self.tolerance {
                    return Ok(linalg::rem_euclid(TAU * (s - t) / self.period, TAU));
                }
                last = last.min(d);
            }
        }
        Err(Error::NotConverged { distance: last })
    }

    /// Points of the isochron of phase `theta` within `radius` of the orbit, found by
    /// bisection along random rays orthogonal to the flow. The first point is the
    /// orbit point itself.
    pub fn isochron_sample(
        &self,
        theta: f64,
        n_points: usize,
        radius: f64,
        seed: u64,
    ) -> Result<Vec<HybridState>> {
        let p = self.orbit_point(theta);
        let mut out = Vec::with_capacity(n_points);
        if n_points == 0 {
            return Ok(out);
        }
        out.push(p.clone());
        let f = self.system.eval_field(p.domain, &p.x);
        let nf = linalg::norm(&f);
        let fh: Vec<f64> = f.iter().map(|v| v / nf).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = linalg::rem_euclid(theta, TAU);
        let wrap = |a: f64| {
            let d = linalg::rem_euclid(a - target, TAU);
            if d > core::f64::consts::PI {
                d - TAU
            } else {
                d
            }
        };
        let mut attempts = 0;
        while out.len() < n_points {
            attempts += 1;
            if attempts > 20 * n_points {
                return Err(Error::NotConverged { distance: radius });
            }
            let mut d: Vec<f64> = (0..p.x.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let c = linalg::dot(&d, &fh);
            for (di, fi) in d.iter_mut().zip(&fh) {
                *di -= c * fi;
            }
            let nd = linalg::norm(&d);
            if nd < 1e-3 {
                continue;
            }
            let rho = radius * rng.random_range(0.3..0.9);
            let base: Vec<f64> = p.x.iter().zip(&d).map(|(a, b)| a + rho * b / nd).collect();
            let at = |c: f64| {
                HybridState::new(
                    p.domain,
                    base.iter().zip(&fh).map(|(a, b)| a + c * b).collect(),
                )
            };
            let inside = |s: &HybridState| self.system.interior_margin(s.domain, &s.x) >= 0.0;
            let phase = |c: f64| -> Option<f64> {
                let s = at(c);
                if !inside(&s) {
                    return None;
                }
                self.phase_of(&s, self.settle_cycles).ok().map(wrap)
            };
            let Some(f0) = phase(0.0) else { continue };
            if f0 == 0.0 {
                out.push(at(0.0));
                continue;
            }
            // Moving along the flow advances the phase, so step against the sign.
            let dir = -f0.signum();
            let mut step = 0.25 * radius;
            let mut bracket = None;
            for _ in 0..8 {
                match phase(dir * step) {
                    Some(v) if v.signum() != f0.signum() => {
                        bracket = Some((0.0, f0, dir * step));
                        break;
                    }
                    Some(_) => step *= 2.0,
                    None => break,
                }
            }
            let Some((mut a, fa0, mut b)) = bracket else {
                continue;
            };
            let mut fa = fa0;
            let mut best = (f64::INFINITY, 0.0);
            for _ in 0..60 {
                let c = 0.5 * (a + b);
                let Some(fc) = phase(c) else { break };
                if fc.abs() < best.0 {
                    best = (fc.abs(), c);
                }
                if fc.abs() < ISOCHRON_PHASE_TOL || (b - a).abs() < 1e-14 {
                    break;
                }
                if fc.signum() == fa.signum() {
                    a = c;
                    fa = fc;
                } else {
                    b = c;
                }
            }
            if best.0 < ISOCHRON_PHASE_TOL {
                out.push(at(best.1));
            }
        }
        Ok(out)
    }
}

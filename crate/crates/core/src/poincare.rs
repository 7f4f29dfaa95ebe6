//! Poincare sections, first-return maps and their linearizations.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hybrid::{
    execute_until, ExecutionTrace, Horizon, HybridState, HybridSystem, LevelFn, StopReason,
    StopRule,
};
use crate::numerics::linalg::{self, Eigenvalue, Mat};
use crate::numerics::ode::{transversality, IntegratorOptions, TRANSVERSALITY_FLOOR};
use crate::numerics::solve::{fd_jacobian, min_norm_newton, NewtonOptions};

/// Level sections count a return once the level has been at least this far on the
/// wrong side, so the starting point itself is never mistaken for a return.
pub const SECTION_ARM: f64 = 1e-9;

#[derive(Clone)]
pub enum SectionKind {
    /// Zero set of `level` inside the domain, crossed with `direction * level` increasing.
    Level { level: LevelFn, direction: f64 },
    /// A guard, sampled just before its reset.
    Guard { guard: usize },
}

#[derive(Clone)]
pub struct Section {
    pub domain: usize,
    pub kind: SectionKind,
    /// Base point on the zero set.
    pub base: Vec<f64>,
    pub normal: Vec<f64>,
    /// Orthonormal columns spanning the normal's complement.
    pub chart: Mat,
}

impl core::fmt::Debug for Section {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Section")
            .field("domain", &self.domain)
            .field("base", &self.base)
            .field("normal", &self.normal)
            .finish()
    }
}

fn gradient(level: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            let d = (level(&xp) - level(&xm)) / (2.0 * h);
            xp[i] = x[i];
            xm[i] = x[i];
            d
        })
        .collect()
}

/// Chart basis: the standard basis minus the vector most aligned with the normal,
/// orthogonalized against the normal.
fn chart_basis(normal: &[f64]) -> Result<Mat> {
    let n = normal.len();
    let drop = (0..n)
        .max_by(|&a, &b| {
            normal[a]
                .abs()
                .partial_cmp(&normal[b].abs())
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        m[(i, 0)] = normal[i];
    }
    let mut c = 1;
    for j in 0..n {
        if j != drop {
            m[(j, c)] = 1.0;
            c += 1;
        }
    }
    let q = linalg::orthonormalize(&m, 1e-12)?;
    if q.ncols() != n {
        return Err(Error::InvalidInput("degenerate section normal".into()));
    }
    Ok(q.columns(1, n - 1).into_owned())
}

impl Section {
    /// Level-set section in `domain` through the projection of `guess` onto the zero set.
    pub fn level(
        sys: &HybridSystem,
        domain: usize,
        level: LevelFn,
        direction: f64,
        guess: &[f64],
    ) -> Result<Section> {
        let kind = SectionKind::Level {
            level: level.clone(),
            direction: direction.signum(),
        };
        Self::build(sys, domain, kind, &*level, direction.signum(), guess)
    }

    /// Section on a guard face (before the reset).
    pub fn guard(sys: &HybridSystem, guard: usize, guess: &[f64]) -> Result<Section> {
        sys.check()?;
        let g = sys
            .guards
            .get(guard)
            .ok_or_else(|| Error::InvalidInput("unknown guard".into()))?;
        let level = sys.domains[g.domain].faces[g.face].level.clone();
        Self::build(
            sys,
            g.domain,
            SectionKind::Guard { guard },
            &*level,
            -1.0,
            guess,
        )
    }

    fn build(
        sys: &HybridSystem,
        domain: usize,
        kind: SectionKind,
        level: &dyn Fn(&[f64]) -> f64,
        direction: f64,
        guess: &[f64],
    ) -> Result<Section> {
        let dom = sys
            .domains
            .get(domain)
            .ok_or_else(|| Error::InvalidInput("unknown domain".into()))?;
        if guess.len() != dom.dim {
            return Err(Error::DimensionMismatch {
                expected: dom.dim,
                got: guess.len(),
            });
        }
        if dom.dim < 2 {
            return Err(Error::InvalidInput(
                "sections need a domain of dimension at least 2".into(),
            ));
        }
        let mut x = guess.to_vec();
        for _ in 0..50 {
            let v = level(&x);
            if v.abs() <= 1e-13 * linalg::norm(&x).max(1.0) {
                break;
            }
            let g = gradient(level, &x);
            let gg = linalg::dot(&g, &g);
            if gg == 0.0 {
                return Err(Error::InvalidInput(
                    "section level has vanishing gradient".into(),
                ));
            }
            for i in 0..x.len() {
                x[i] -= v * g[i] / gg;
            }
        }
        if level(&x).abs() > 1e-10 {
            return Err(Error::NoConvergence {
                iterations: 50,
                residual: level(&x).abs(),
            });
        }
        let g = gradient(level, &x);
        let ng = linalg::norm(&g);
        let normal: Vec<f64> = g.iter().map(|v| v / ng).collect();
        let (d, ratio) = transversality(&*dom.field, level, &x);
        if ratio < TRANSVERSALITY_FLOOR || d * direction <= 0.0 {
            return Err(Error::TangentialCrossing {
                watch: usize::MAX,
                t: 0.0,
                ratio,
            });
        }
        let chart = chart_basis(&normal)?;
        Ok(Section {
            domain,
            kind,
            base: x,
            normal,
            chart,
        })
    }

    pub fn dim(&self) -> usize {
        self.chart.ncols()
    }

    pub fn level_fn<'a>(
        &'a self,
        sys: &'a HybridSystem,
    ) -> &'a (dyn Fn(&[f64]) -> f64 + Send + Sync) {
        match &self.kind {
            SectionKind::Level { level, .. } => &**level,
            SectionKind::Guard { guard } => {
                let g = &sys.guards[*guard];
                &*sys.domains[g.domain].faces[g.face].level
            }
        }
    }

    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| (0..x.len()).map(|i| self.chart[(i, j)] * x[i]).sum())
            .collect()
    }

    /// State on the zero set with the given chart coordinates.
    pub fn lift(&self, sys: &HybridSystem, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: s.len(),
            });
        }
        let level = self.level_fn(sys);
        let b0 = self.coords(&self.base);
        let n = self.base.len();
        let mut x = self.base.clone();
        for i in 0..n {
            for j in 0..self.dim() {
                x[i] += self.chart[(i, j)] * (s[j] - b0[j]);
            }
        }
        // Move along the normal until the level vanishes (secant iteration).
        let at = |a: f64| -> Vec<f64> {
            x.iter()
                .zip(&self.normal)
                .map(|(xi, ni)| xi + a * ni)
                .collect()
        };
        let (mut a0, mut f0) = (0.0, level(&x));
        let tol = 1e-14 * linalg::norm(&x).max(1.0);
        if f0.abs() <= tol {
            return Ok(x);
        }
        let mut a1 = 1e-6 * linalg::norm(&x).max(1.0);
        let mut f1 = level(&at(a1));
        for _ in 0..60 {
            if f1.abs() <= tol {
                return Ok(at(a1));
            }
            let den = f1 - f0;
            if den == 0.0 {
                break;
            }
            let a2 = a1 - f1 * (a1 - a0) / den;
            a0 = a1;
            f0 = f1;
            a1 = a2;
            f1 = level(&at(a1));
        }
        if f1.abs() <= 1e-10 {
            return Ok(at(a1));
        }
        Err(Error::NoConvergence {
            iterations: 60,
            residual: f1.abs(),
        })
    }

    /// Same section re-anchored at another point of its zero set.
    pub fn recentered(&self, sys: &HybridSystem, x: &[f64]) -> Result<Section> {
        match &self.kind {
            SectionKind::Level { level, direction } => {
                Section::level(sys, self.domain, level.clone(), *direction, x)
            }
            SectionKind::Guard { guard } => Section::guard(sys, *guard, x),
        }
    }
}

/// A smooth self-map of section coordinates.
pub trait ReturnMap {
    fn dim(&self) -> usize;
    fn apply(&self, s: &[f64]) -> Result<Vec<f64>>;

    fn fd_step(&self) -> Option<f64> {
        None
    }

    fn jacobian(&self, s: &[f64]) -> Result<Mat> {
        fd_jacobian(&|x: &[f64]| self.apply(x), s, self.fd_step())
    }

    /// Smallest domain dimension of the underlying system.
    fn min_domain_dim(&self) -> usize {
        self.dim() + 1
    }
}

/// A linear map `x -> A x`, useful as a discrete oracle.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub a: Mat,
}

impl ReturnMap for LinearMap {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: s.len(),
            });
        }
        Ok(linalg::mat_vec(&self.a, s))
    }

    fn jacobian(&self, _s: &[f64]) -> Result<Mat> {
        Ok(self.a.clone())
    }
}

pub fn iterate(map: &dyn ReturnMap, s: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut x = s.to_vec();
    for _ in 0..k {
        x = map.apply(&x)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSample {
    pub coords: Vec<f64>,
    pub state: Vec<f64>,
    pub time: f64,
    pub sequence: Vec<usize>,
}

#[derive(Clone)]
pub struct PoincareMapHandle {
    pub system: Arc<HybridSystem>,
    pub section: Section,
    pub opts: IntegratorOptions,
    pub max_time: f64,
    pub max_events: usize,
    /// When set, a return through any other guard sequence is an error.
    pub expected_sequence: Option<Vec<usize>>,
    pub fd_step: Option<f64>,
}

/// Fixed step used for return maps: the numerical flow is then smooth in the
/// initial state, which finite differences rely on.
pub const RETURN_MAP_STEP: f64 = 1e-3;

impl PoincareMapHandle {
    pub fn new(system: Arc<HybridSystem>, section: Section) -> Self {
        PoincareMapHandle {
            system,
            section,
            opts: IntegratorOptions::fixed(RETURN_MAP_STEP),
            max_time: 1e3,
            max_events: 64,
            expected_sequence: None,
            fd_step: None,
        }
    }

    pub fn with_options(mut self, opts: IntegratorOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn strict(mut self, seq: Vec<usize>) -> Self {
        self.expected_sequence = Some(seq);
        self
    }

    pub fn lift(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.section.lift(&self.system, s)
    }

    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.section.coords(x)
    }

    /// Run from a state on the section to the next return, keeping the trace.
    pub fn first_return_trace(&self, x: &[f64]) -> Result<(ReturnSample, ExecutionTrace)> {
        let sys = &*self.system;
        let horizon = Horizon {
            time: self.max_time,
            max_events: Some(self.max_events),
        };
        let (tr, mut seq) = match &self.section.kind {
            SectionKind::Level { level, direction } => {
                let stop = StopRule::Level {
                    domain: self.section.domain,
                    level: &**level,
                    direction: *direction,
                    arm: SECTION_ARM,
                };
                let tr = execute_until(
                    sys,
                    &HybridState::new(self.section.domain, x.to_vec()),
                    0.0,
                    horizon,
                    stop,
                    &self.opts,
                )?;
                if tr.stop != StopReason::Section {
                    return Err(Error::NoReturn);
                }
                (tr, Vec::new())
            }
            SectionKind::Guard { guard } => {
                let g = &sys.guards[*guard];
                let post = (g.reset)(x);
                let start = HybridState::new(g.target, post);
                let tr = execute_until(
                    sys,
                    &start,
                    0.0,
                    horizon,
                    StopRule::Guard(*guard),
                    &self.opts,
                )?;
                if tr.stop != StopReason::GuardHit {
                    return Err(Error::NoReturn);
                }
                (tr, vec![*guard])
            }
        };
        seq.extend(tr.guard_sequence());
        if let Some(exp) = &self.expected_sequence {
            if *exp != seq {
                return Err(Error::WrongSequence { got: seq });
            }
        }
        let state = tr.final_state.x.clone();
        let sample = ReturnSample {
            coords: self.coords(&state),
            state,
            time: tr.final_time,
            sequence: seq,
        };
        Ok((sample, tr))
    }

    pub fn first_return_state(&self, x: &[f64]) -> Result<ReturnSample> {
        Ok(self.first_return_trace(x)?.0)
    }

    pub fn first_return(&self, s: &[f64]) -> Result<ReturnSample> {
        let x = self.lift(s)?;
        self.first_return_state(&x)
    }
}

impl ReturnMap for PoincareMapHandle {
    fn dim(&self) -> usize {
        self.section.dim()
    }

    fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.first_return(s)?.coords)
    }

    fn fd_step(&self) -> Option<f64> {
        self.fd_step
    }

    fn min_domain_dim(&self) -> usize {
        self.system.min_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeriodicOrbit {
    pub coords: Vec<f64>,
    pub state: HybridState,
    pub period: f64,
    pub residual: f64,
    pub iterations: usize,
    pub sequence: Vec<usize>,
}

/// Fixed point of the return map by minimum-norm Newton iteration on `P(s) - s`.
/// Neutral directions (symmetries, conserved quantities) are tolerated.
pub fn find_periodic_orbit(handle: &PoincareMapHandle, guess: &[f64]) -> Result<PeriodicOrbit> {
    let f = |s: &[f64]| -> Result<Vec<f64>> {
        let p = handle.apply(s)?;
        Ok(p.iter().zip(s).map(|(a, b)| a - b).collect())
    };
    let opts = NewtonOptions {
        tol: 1e-10,
        max_iter: 60,
        fd_step: handle.fd_step,
    };
    let r = min_norm_newton(&f, guess, &opts)?;
    let x = handle.lift(&r.x)?;
    let ret = handle.first_return_state(&x)?;
    Ok(PeriodicOrbit {
        coords: r.x,
        state: HybridState::new(handle.section.domain, x),
        period: ret.time,
        residual: r.residual,
        iterations: r.iterations,
        sequence: ret.sequence,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralSummary {
    pub dim: usize,
    /// Smallest domain dimension of the system.
    pub m: usize,
    pub rank_bound: usize,
    pub jacobian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<Eigenvalue>,
    /// Singular values of `DP^k` for `k = 1, 2, ...`.
    pub singular_values: Vec<Vec<f64>>,
    pub ranks: Vec<usize>,
    pub nilpotent_index: usize,
    pub anomalies: Vec<String>,
}

impl SpectralSummary {
    pub fn rank(&self, k: usize) -> usize {
        if k == 0 {
            return self.dim;
        }
        self.ranks[(k - 1).min(self.ranks.len() - 1)]
    }
}

/// Rank of a linearized return map (see [`linalg::unit_scaled_rank`]).
pub fn map_rank(m: &Mat, rank_tol: f64) -> Result<usize> {
    Ok(linalg::unit_scaled_rank(
        &linalg::singular_values(m)?,
        rank_tol,
    ))
}

pub fn summarize_jacobian(dp: &Mat, m: usize, rank_tol: f64) -> Result<SpectralSummary> {
    let dim = dp.nrows();
    let kmax = m.max(dim) + 1;
    let mut pow = Mat::identity(dim, dim);
    let mut svs = Vec::new();
    let mut ranks = Vec::new();
    for _ in 0..kmax {
        pow = &pow * dp;
        let s = linalg::singular_values(&pow)?;
        ranks.push(linalg::unit_scaled_rank(&s, rank_tol));
        svs.push(s);
    }
    let nilpotent_index = (0..kmax - 1)
        .find(|&i| ranks[i] == ranks[i + 1])
        .map(|i| i + 1)
        .unwrap_or(kmax);
    let mut anomalies = Vec::new();
    let rank_bound = m.saturating_sub(1);
    if ranks[0] > rank_bound {
        anomalies.push(alloc::format!(
            "rank {} of DP exceeds the bound {}",
            ranks[0],
            rank_bound
        ));
    }
    if ranks.windows(2).any(|w| w[1] > w[0]) {
        anomalies.push("iterated ranks are not monotone".into());
    }
    let ri = ranks[nilpotent_index - 1];
    if m >= 1 && m <= ranks.len() && nilpotent_index <= m && ranks[m - 1] != ri {
        anomalies.push("rank stabilized before m but differs at m".into());
    }
    Ok(SpectralSummary {
        dim,
        m,
        rank_bound,
        jacobian: linalg::to_rows(dp),
        eigenvalues: linalg::eigenvalues(dp)?,
        singular_values: svs,
        ranks,
        nilpotent_index,
        anomalies,
    })
}

pub fn spectral_summary(map: &dyn ReturnMap, xi: &[f64], rank_tol: f64) -> Result<SpectralSummary> {
    let dp = map.jacobian(xi)?;
    summarize_jacobian(&dp, map.min_domain_dim(), rank_tol)
}

/// Derivative of `P^k` at `x` by chaining Jacobians along the orbit of `x`.
pub fn chained_jacobian(map: &dyn ReturnMap, x: &[f64], k: usize) -> Result<Mat> {
    let n = map.dim();
    let mut acc = Mat::identity(n, n);
    let mut p = x.to_vec();
    for i in 0..k {
        acc = map.jacobian(&p)? * acc;
        if i + 1 < k {
            p = map.apply(&p)?;
        }
    }
    Ok(acc)
}

/// Finite-difference derivative of `P^k` taken directly, as a cross-check.
pub fn fd_iterate_jacobian(map: &dyn ReturnMap, x: &[f64], k: usize) -> Result<Mat> {
    fd_jacobian(&|s: &[f64]| iterate(map, s, k), x, map.fd_step())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertificateReport {
    pub holds: bool,
    pub degenerate: bool,
    pub k: usize,
    pub radius: f64,
    pub sample_ranks: Vec<usize>,
    /// `(rank, count)` pairs.
    pub histogram: Vec<(usize, usize)>,
    pub rank_k_at_xi: usize,
    pub rank_k1_at_xi: usize,
    pub stabilized: bool,
}

/// Uniform samples in the ball of `radius` around `center`.
pub fn ball_samples(center: &[f64], radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = center.len();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if linalg::norm(&v) <= 1.0 {
            out.push(center.iter().zip(&v).map(|(c, e)| c + radius * e).collect());
        }
    }
    out
}

/// Check that `rank DP^k` is constant near `xi` and that it has stabilized
/// (`rank DP^k = rank DP^{k+1}` at `xi`).
pub fn constant_rank_certificate(
    map: &dyn ReturnMap,
    xi: &[f64],
    radius: f64,
    n_samples: usize,
    k: usize,
    seed: u64,
    rank_tol: f64,
) -> Result<CertificateReport> {
    if k == 0 {
        return Err(Error::InvalidInput(
            "iterate count must be at least 1".into(),
        ));
    }
    let dp = map.jacobian(xi)?;
    let rk = map_rank(&linalg::mat_pow(&dp, k), rank_tol)?;
    let rk1 = map_rank(&linalg::mat_pow(&dp, k + 1), rank_tol)?;
    let degenerate = !(radius > 0.0) || n_samples == 0;
    let points = if degenerate {
        vec![xi.to_vec()]
    } else {
        ball_samples(xi, radius, n_samples, seed)
    };
    let mut sample_ranks = Vec::with_capacity(points.len());
    for p in &points {
        let j = chained_jacobian(map, p, k)?;
        sample_ranks.push(map_rank(&j, rank_tol)?);
    }
    let mut histogram: Vec<(usize, usize)> = Vec::new();
    for &r in &sample_ranks {
        match histogram.iter_mut().find(|(v, _)| *v == r) {
            Some(e) => e.1 += 1,
            None => histogram.push((r, 1)),
        }
    }
    histogram.sort();
    let stabilized = rk == rk1;
    let holds = sample_ranks.iter().all(|&r| r == rk) && stabilized;
    Ok(CertificateReport {
        holds,
        degenerate,
        k,
        radius,
        sample_ranks,
        histogram,
        rank_k_at_xi: rk,
        rank_k1_at_xi: rk1,
        stabilized,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumComparison {
    pub nonzero_a: Vec<Eigenvalue>,
    pub nonzero_b: Vec<Eigenvalue>,
    pub zeros_a: usize,
    pub zeros_b: usize,
    pub max_discrepancy: f64,
    pub unmatched: usize,
}

fn split_spectrum(dp: &Mat, rank_tol: f64) -> Result<(Vec<Eigenvalue>, usize)> {
    let eig = linalg::eigenvalues(dp)?;
    let thr = rank_tol * linalg::spectral_norm(dp)?.max(1.0);
    let nz: Vec<Eigenvalue> = eig.iter().copied().filter(|e| e.modulus() > thr).collect();
    let zeros = eig.len() - nz.len();
    Ok((nz, zeros))
}

/// Compare the nonzero spectra of two linearized return maps, pairing greedily by magnitude.
pub fn compare_jacobians(a: &Mat, b: &Mat, rank_tol: f64) -> Result<SpectrumComparison> {
    let (na, za) = split_spectrum(a, rank_tol)?;
    let (nb, zb) = split_spectrum(b, rank_tol)?;
    let mut rest: Vec<Eigenvalue> = nb.clone();
    let mut worst: f64 = 0.0;
    let mut unmatched = 0;
    for e in &na {
        let best = rest.iter().enumerate().min_by(|x, y| {
            (x.1.modulus() - e.modulus())
                .abs()
                .partial_cmp(&(y.1.modulus() - e.modulus()).abs())
                .unwrap()
        });
        match best.map(|(i, _)| i) {
            Some(i) => {
                worst = worst.max(rest[i].dist(e));
                rest.remove(i);
            }
            None => unmatched += 1,
        }
    }
    unmatched += rest.len();
    Ok(SpectrumComparison {
        nonzero_a: na,
        nonzero_b: nb,
        zeros_a: za,
        zeros_b: zb,
        max_discrepancy: worst,
        unmatched,
    })
}

pub fn compare_sections(
    a: &dyn ReturnMap,
    xi_a: &[f64],
    b: &dyn ReturnMap,
    xi_b: &[f64],
    rank_tol: f64,
) -> Result<SpectrumComparison> {
    compare_jacobians(&a.jacobian(xi_a)?, &b.jacobian(xi_b)?, rank_tol)
}

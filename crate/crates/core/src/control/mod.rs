//! Event-triggered parameterized control: controlled return maps, deadbeat laws and
//! the polyped embedding controller.

pub mod embedding;

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hybrid::HybridSystem;
use crate::numerics::linalg::{self, Eigenvalue, Mat};
use crate::numerics::solve::{fd_jacobian, min_norm_newton, NewtonOptions};
use crate::poincare::{PoincareMapHandle, ReturnMap};

/// Return map `P(x, theta)` with a parameter held constant over one cycle.
pub trait ControlledReturnMap {
    fn dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn apply(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;
    /// Nominal `(xi, theta*)` with `P(xi, theta*) = xi`.
    fn nominal(&self) -> (&[f64], &[f64]);

    fn fd_step(&self) -> Option<f64> {
        None
    }

    fn min_domain_dim(&self) -> usize {
        self.dim() + 1
    }
}

/// Builds the system for a parameter value.
pub type SystemFamily = Arc<dyn Fn(&[f64]) -> Result<HybridSystem> + Send + Sync>;

/// Controlled return map of a parameterized hybrid system on a fixed section.
#[derive(Clone)]
pub struct HybridControlledMap {
    pub family: SystemFamily,
    /// Section, integrator and sequence settings; its system is replaced per call.
    pub template: PoincareMapHandle,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
}

impl HybridControlledMap {
    pub fn new(
        family: SystemFamily,
        template: PoincareMapHandle,
        xi: Vec<f64>,
        theta: Vec<f64>,
    ) -> Self {
        HybridControlledMap {
            family,
            template,
            xi,
            theta,
        }
    }

    pub fn handle(&self, theta: &[f64]) -> Result<PoincareMapHandle> {
        let mut h = self.template.clone();
        h.system = Arc::new((self.family)(theta)?);
        Ok(h)
    }
}

impl ControlledReturnMap for HybridControlledMap {
    fn dim(&self) -> usize {
        self.template.section.dim()
    }

    fn param_dim(&self) -> usize {
        self.theta.len()
    }

    fn apply(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.handle(theta)?.apply(x)
    }

    fn nominal(&self) -> (&[f64], &[f64]) {
        (&self.xi, &self.theta)
    }

    fn fd_step(&self) -> Option<f64> {
        self.template.fd_step
    }

    fn min_domain_dim(&self) -> usize {
        self.template.system.min_dim()
    }
}

/// `P(x, theta) = xi + A (x - xi) + B (theta - theta*) + offset`.
#[derive(Debug, Clone)]
pub struct AffineControlledMap {
    pub a: Mat,
    pub b: Mat,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineControlledMap {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        linalg::check_square(&a)?;
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        let (n, p) = (a.nrows(), b.ncols());
        Ok(AffineControlledMap {
            a,
            b,
            xi: vec![0.0; n],
            theta: vec![0.0; p],
            offset: vec![0.0; n],
        })
    }
}

impl ControlledReturnMap for AffineControlledMap {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn param_dim(&self) -> usize {
        self.b.ncols()
    }

    fn apply(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: theta.len(),
            });
        }
        let dx: Vec<f64> = x.iter().zip(&self.xi).map(|(a, b)| a - b).collect();
        let dt: Vec<f64> = theta.iter().zip(&self.theta).map(|(a, b)| a - b).collect();
        let ax = linalg::mat_vec(&self.a, &dx);
        let bt = linalg::mat_vec(&self.b, &dt);
        Ok((0..self.dim())
            .map(|i| self.xi[i] + ax[i] + bt[i] + self.offset[i])
            .collect())
    }

    fn nominal(&self) -> (&[f64], &[f64]) {
        (&self.xi, &self.theta)
    }
}

/// `k` cycles of a controlled map with one parameter per cycle, stacked.
pub struct IteratedMap<'a> {
    pub map: &'a dyn ControlledReturnMap,
    pub k: usize,
    theta: Vec<f64>,
}

impl<'a> IteratedMap<'a> {
    pub fn new(map: &'a dyn ControlledReturnMap, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput(
                "horizon must be at least one cycle".into(),
            ));
        }
        let theta = map.nominal().1.repeat(k);
        Ok(IteratedMap { map, k, theta })
    }
}

impl ControlledReturnMap for IteratedMap<'_> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn param_dim(&self) -> usize {
        self.map.param_dim() * self.k
    }

    fn apply(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let p = self.map.param_dim();
        if theta.len() != p * self.k {
            return Err(Error::DimensionMismatch {
                expected: p * self.k,
                got: theta.len(),
            });
        }
        let seq: Vec<Vec<f64>> = theta.chunks(p.max(1)).map(|c| c.to_vec()).collect();
        let seq = if p == 0 {
            vec![Vec::new(); self.k]
        } else {
            seq
        };
        controlled_return(self.map, x, &seq)
    }

    fn nominal(&self) -> (&[f64], &[f64]) {
        (self.map.nominal().0, &self.theta)
    }

    fn fd_step(&self) -> Option<f64> {
        self.map.fd_step()
    }

    fn min_domain_dim(&self) -> usize {
        self.map.min_domain_dim()
    }
}

/// `P_l(x, (theta_1, ..., theta_l))`.
pub fn controlled_return(
    map: &dyn ControlledReturnMap,
    x: &[f64],
    thetas: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if thetas.is_empty() {
        return Err(Error::InvalidInput("empty parameter sequence".into()));
    }
    let mut s = x.to_vec();
    for th in thetas {
        s = map.apply(&s, th)?;
    }
    Ok(s)
}

/// Central-difference blocks `(D_x P, D_theta P)` at `(x, theta)`.
pub fn linearize_at(map: &dyn ControlledReturnMap, x: &[f64], theta: &[f64]) -> Result<(Mat, Mat)> {
    let dx = fd_jacobian(&|v: &[f64]| map.apply(v, theta), x, map.fd_step())?;
    let dt = if theta.is_empty() {
        Mat::zeros(map.dim(), 0)
    } else {
        fd_jacobian(&|t: &[f64]| map.apply(x, t), theta, map.fd_step())?
    };
    Ok((dx, dt))
}

pub fn linearize_control(map: &dyn ControlledReturnMap) -> Result<(Mat, Mat)> {
    let (xi, th) = map.nominal();
    linearize_at(map, xi, th)
}

pub type OutputFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Smooth output `h` on the section whose zero set is the deadbeat target.
#[derive(Clone)]
pub struct OutputConstraint {
    pub h: OutputFn,
    pub d: usize,
}

impl OutputConstraint {
    pub fn new<F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static>(d: usize, h: F) -> Self {
        OutputConstraint { h: Arc::new(h), d }
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat> {
        fd_jacobian(&|v: &[f64]| Ok((self.h)(v)), x, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LawKind {
    OneCycleNewton,
    MultiCycle(usize),
    LinearFeedback,
}

/// A deadbeat law; `psi` is solved on demand.
#[derive(Clone)]
pub struct DeadbeatLaw {
    pub kind: LawKind,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub constraint: Option<OutputConstraint>,
    pub gain: Option<Mat>,
    pub newton: NewtonOptions,
}

impl core::fmt::Debug for DeadbeatLaw {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DeadbeatLaw")
            .field("kind", &self.kind)
            .field("xi", &self.xi)
            .field("theta", &self.theta)
            .field("constrained", &self.constraint.is_some())
            .field("gain", &self.gain)
            .finish()
    }
}

impl DeadbeatLaw {
    /// Cycles covered by one application of the law.
    pub fn horizon(&self) -> usize {
        match self.kind {
            LawKind::MultiCycle(k) => k,
            _ => 1,
        }
    }

    /// Parameter sequence, one entry per cycle, for the state `x`.
    pub fn psi(&self, map: &dyn ControlledReturnMap, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let p = map.param_dim();
        let stacked = self.psi_stacked(map, x)?;
        Ok(if p == 0 {
            vec![Vec::new(); self.horizon()]
        } else {
            stacked.chunks(p).map(|c| c.to_vec()).collect()
        })
    }

    fn psi_stacked(&self, map: &dyn ControlledReturnMap, x: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            LawKind::LinearFeedback => {
                let g = self
                    .gain
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("linear law without gain".into()))?;
                let dx: Vec<f64> = x.iter().zip(&self.xi).map(|(a, b)| a - b).collect();
                let u = linalg::mat_vec(g, &dx);
                Ok(self.theta.iter().zip(&u).map(|(a, b)| a + b).collect())
            }
            LawKind::OneCycleNewton => self.solve(map, x),
            LawKind::MultiCycle(k) => self.solve(&IteratedMap::new(map, k)?, x),
        }
    }

    fn target_residual(&self, y: &[f64]) -> Vec<f64> {
        match &self.constraint {
            Some(c) => (c.h)(y),
            None => y.iter().zip(&self.xi).map(|(a, b)| a - b).collect(),
        }
    }

    fn solve(&self, map: &dyn ControlledReturnMap, x: &[f64]) -> Result<Vec<f64>> {
        let f = |th: &[f64]| -> Result<Vec<f64>> { Ok(self.target_residual(&map.apply(x, th)?)) };
        let opts = NewtonOptions {
            fd_step: self.newton.fd_step.or(map.fd_step()),
            ..self.newton
        };
        Ok(min_norm_newton(&f, map.nominal().1, &opts)?.x)
    }

    /// Derivative of the stacked law at `x`, given the plant blocks there.
    fn dpsi(&self, y: &[f64], dx: &Mat, dt: &Mat) -> Result<Mat> {
        match self.kind {
            LawKind::LinearFeedback => Ok(self
                .gain
                .clone()
                .unwrap_or_else(|| Mat::zeros(dt.ncols(), dx.ncols()))),
            _ => {
                let (gx, gt) = match &self.constraint {
                    Some(c) => {
                        let dh = c.jacobian(y)?;
                        (&dh * dx, &dh * dt)
                    }
                    None => (dx.clone(), dt.clone()),
                };
                Ok(-linalg::pinv(&gt, 1e-10)? * gx)
            }
        }
    }
}

fn law_map<'a>(
    map: &'a dyn ControlledReturnMap,
    law: &DeadbeatLaw,
) -> Result<Box<dyn ControlledReturnMap + 'a>> {
    Ok(match law.kind {
        LawKind::MultiCycle(k) => Box::new(IteratedMap::new(map, k)?),
        _ => Box::new(Borrowed(map)),
    })
}

struct Borrowed<'a>(&'a dyn ControlledReturnMap);

impl ControlledReturnMap for Borrowed<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn param_dim(&self) -> usize {
        self.0.param_dim()
    }
    fn apply(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.0.apply(x, theta)
    }
    fn nominal(&self) -> (&[f64], &[f64]) {
        self.0.nominal()
    }
    fn fd_step(&self) -> Option<f64> {
        self.0.fd_step()
    }
    fn min_domain_dim(&self) -> usize {
        self.0.min_domain_dim()
    }
}

fn newton_law(
    map: &dyn ControlledReturnMap,
    kind: LawKind,
    constraint: Option<OutputConstraint>,
) -> Result<DeadbeatLaw> {
    let (xi, th) = map.nominal();
    let (_, dt) = linearize_control(map)?;
    let (required, achieved) = match &constraint {
        Some(c) => {
            let y0 = (c.h)(xi);
            if linalg::norm(&y0) > 1e-9 {
                return Err(Error::InvalidInput(
                    "output constraint does not vanish at the fixed point".into(),
                ));
            }
            (
                c.d,
                linalg::numerical_rank(&(c.jacobian(xi)? * &dt), linalg::RANK_TOL)?,
            )
        }
        None => (map.dim(), linalg::numerical_rank(&dt, linalg::RANK_TOL)?),
    };
    let k = match kind {
        LawKind::MultiCycle(k) => k,
        _ => 1,
    };
    if achieved < required {
        return Err(Error::RankDeficient {
            achieved,
            required,
            k,
        });
    }
    Ok(DeadbeatLaw {
        kind,
        xi: xi.to_vec(),
        theta: th.to_vec(),
        constraint,
        gain: None,
        newton: NewtonOptions {
            tol: 1e-12,
            max_iter: 30,
            fd_step: None,
        },
    })
}

/// One-cycle deadbeat: `P(x, psi(x)) = xi`, or `h(P(x, psi(x))) = 0` when constrained.
pub fn synth_deadbeat_onecycle(
    map: &dyn ControlledReturnMap,
    constraint: Option<OutputConstraint>,
) -> Result<DeadbeatLaw> {
    newton_law(map, LawKind::OneCycleNewton, constraint)
}

/// Deadbeat over `k` cycles with one parameter value per cycle.
pub fn synth_deadbeat_multicycle(map: &dyn ControlledReturnMap, k: usize) -> Result<DeadbeatLaw> {
    let it = IteratedMap::new(map, k)?;
    let mut law = newton_law(&it, LawKind::MultiCycle(k), None)?;
    law.theta = map.nominal().1.to_vec();
    Ok(law)
}

/// Gain `Psi` and step count `k` with `range((A + B Psi)^k)` inside `span(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDeadbeat {
    pub gain: Mat,
    pub k: usize,
    pub closed_loop: Mat,
    /// `|(I - P_S) A_cl^k|`.
    pub residual: f64,
}

const LINEAR_TOL: f64 = 1e-9;

fn controllable_split(a: &Mat, b: &Mat) -> Result<(Mat, Mat)> {
    let n = a.nrows();
    let mut blocks = Mat::zeros(n, n * b.ncols());
    let mut cur = b.clone();
    for i in 0..n {
        blocks
            .view_mut((0, i * b.ncols()), (n, b.ncols()))
            .copy_from(&cur);
        cur = a * cur;
    }
    let r = if b.ncols() == 0 {
        0
    } else {
        linalg::numerical_rank(&blocks, 1e-10)?
    };
    // The Gram matrix is symmetric, so its trailing singular vectors complement the range.
    linalg::split_bases(&(&blocks * blocks.transpose()), r)
}

/// Single-input deadbeat gain for a controllable pair (Ackermann with `p(z) = z^n`).
fn ackermann(a: &Mat, b: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let mut c = Mat::zeros(n, n);
    let mut cur = b.clone();
    for i in 0..n {
        c.set_column(i, &cur.column(0));
        cur = a * cur;
    }
    let inv = c.try_inverse()?;
    let last = Mat::from_fn(1, n, |_, j| inv[(n - 1, j)]);
    Some(-(last * linalg::mat_pow(a, n)))
}

fn projector_out(s: &Mat, n: usize) -> Result<Mat> {
    let q = if s.ncols() == 0 {
        Mat::zeros(n, 0)
    } else {
        linalg::orthonormalize(s, 1e-12)?
    };
    Ok(Mat::identity(n, n) - &q * q.transpose())
}

/// Nilpotent placement on the controllable block of `(A, B)`; the result is checked
/// against the target subspace spanned by the columns of `s`.
pub fn synth_linear_deadbeat(a: &Mat, b: &Mat, s: &Mat, seed: u64) -> Result<LinearDeadbeat> {
    linalg::check_square(a)?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.nrows(),
        });
    }
    if s.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: s.nrows(),
        });
    }
    let p = b.ncols();
    let out = projector_out(s, n)?;
    let judge = |g: Mat| -> Result<Option<LinearDeadbeat>> {
        let acl = a + b * &g;
        let mut pw = Mat::identity(n, n);
        for k in 1..=n.max(1) {
            pw = &acl * pw;
            let res = linalg::spectral_norm(&(&out * &pw))?;
            if res <= LINEAR_TOL {
                return Ok(Some(LinearDeadbeat {
                    gain: g,
                    k,
                    closed_loop: acl,
                    residual: res,
                }));
            }
        }
        Ok(None)
    };
    if n == 0 {
        return Ok(LinearDeadbeat {
            gain: Mat::zeros(p, 0),
            k: 0,
            closed_loop: a.clone(),
            residual: 0.0,
        });
    }
    if p == n && linalg::condition_number(b)? < 1e10 {
        let g = -b.clone().try_inverse().ok_or(Error::SingularJacobian)? * a;
        if let Some(r) = judge(g)? {
            return Ok(r);
        }
    }
    let (q1, q2) = controllable_split(a, b)?;
    let nc = q1.ncols();
    let mut t = Mat::zeros(n, n);
    t.view_mut((0, 0), (n, nc)).copy_from(&q1);
    t.view_mut((0, nc), (n, n - nc)).copy_from(&q2);
    let at = t.transpose() * a * &t;
    let bt = t.transpose() * b;
    let a11 = at.view((0, 0), (nc, nc)).into_owned();
    let b1 = bt.view((0, 0), (nc, p)).into_owned();
    if nc == 0 {
        return judge(Mat::zeros(p, n))?.ok_or(Error::NotStabilizable);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..32 {
        let (k0, g) = if p == 1 && attempt == 0 {
            (Mat::zeros(1, nc), Mat::from_element(1, 1, 1.0))
        } else {
            let k0 = Mat::from_fn(p, nc, |_, _| rng.random_range(-1.0..1.0));
            let g = Mat::from_fn(p, 1, |_, _| rng.random_range(-1.0..1.0));
            (k0, g)
        };
        let a0 = &a11 + &b1 * &k0;
        let Some(k1) = ackermann(&a0, &(&b1 * &g)) else {
            continue;
        };
        let kc = k0 + g * k1;
        let mut kt = Mat::zeros(p, n);
        kt.view_mut((0, 0), (p, nc)).copy_from(&kc);
        let gain = kt * t.transpose();
        if let Some(r) = judge(gain)? {
            return Ok(r);
        }
    }
    Err(Error::NotStabilizable)
}

pub fn linear_law(
    map: &dyn ControlledReturnMap,
    s: &Mat,
    seed: u64,
) -> Result<(DeadbeatLaw, LinearDeadbeat)> {
    let (dx, dt) = linearize_control(map)?;
    let sol = synth_linear_deadbeat(&dx, &dt, s, seed)?;
    let (xi, th) = map.nominal();
    let law = DeadbeatLaw {
        kind: LawKind::LinearFeedback,
        xi: xi.to_vec(),
        theta: th.to_vec(),
        constraint: None,
        gain: Some(sol.gain.clone()),
        newton: NewtonOptions::default(),
    };
    Ok((law, sol))
}

/// Closed-loop return map `x -> P_k(x, psi(x))` of a plant under a law designed on
/// `design` (usually the plant itself). The Jacobian is assembled by the chain rule,
/// which keeps Newton-solve noise out of it.
pub struct ClosedLoopMap<'a> {
    pub plant: &'a dyn ControlledReturnMap,
    pub design: &'a dyn ControlledReturnMap,
    pub law: &'a DeadbeatLaw,
}

impl<'a> ClosedLoopMap<'a> {
    pub fn new(map: &'a dyn ControlledReturnMap, law: &'a DeadbeatLaw) -> Self {
        ClosedLoopMap {
            plant: map,
            design: map,
            law,
        }
    }
}

impl ReturnMap for ClosedLoopMap<'_> {
    fn dim(&self) -> usize {
        self.plant.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let th = self.law.psi(self.design, x)?;
        controlled_return(self.plant, x, &th)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat> {
        let plant = law_map(self.plant, self.law)?;
        let design = law_map(self.design, self.law)?;
        let th: Vec<f64> = self.law.psi(self.design, x)?.concat();
        let (px, pt) = linearize_at(&*plant, x, &th)?;
        let dpsi = if self.law.kind == LawKind::LinearFeedback {
            self.law.dpsi(x, &px, &pt)?
        } else {
            let y = design.apply(x, &th)?;
            let (dx, dt) = linearize_at(&*design, x, &th)?;
            self.law.dpsi(&y, &dx, &dt)?
        };
        Ok(px + pt * dpsi)
    }

    fn fd_step(&self) -> Option<f64> {
        self.plant.fd_step()
    }

    fn min_domain_dim(&self) -> usize {
        self.plant.min_domain_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeReport {
    pub fixed_point: Vec<f64>,
    pub shift: f64,
    pub multipliers: Vec<Eigenvalue>,
    pub residual: f64,
}

/// Fixed point and multipliers of `perturbed` under a law designed for the nominal map.
pub fn structural_stability_probe(
    nominal: &dyn ControlledReturnMap,
    law: &DeadbeatLaw,
    perturbed: &dyn ControlledReturnMap,
) -> Result<ProbeReport> {
    let cl = ClosedLoopMap {
        plant: perturbed,
        design: nominal,
        law,
    };
    let xi = nominal.nominal().0;
    let f = |x: &[f64]| -> Result<Vec<f64>> {
        let y = cl.apply(x)?;
        Ok(y.iter().zip(x).map(|(a, b)| a - b).collect())
    };
    let r = min_norm_newton(
        &f,
        xi,
        &NewtonOptions {
            tol: 1e-11,
            max_iter: 40,
            fd_step: nominal.fd_step(),
        },
    )?;
    let j = cl.jacobian(&r.x)?;
    Ok(ProbeReport {
        shift: linalg::dist(&r.x, xi),
        multipliers: linalg::eigenvalues(&j)?,
        residual: r.residual,
        fixed_point: r.x,
    })
}

/// Largest `|P(x, psi(x)) - xi|` over the given states.
pub fn deadbeat_residuals(
    map: &dyn ControlledReturnMap,
    law: &DeadbeatLaw,
    states: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let cl = ClosedLoopMap::new(map, law);
    states
        .iter()
        .map(|x| {
            let y = cl.apply(x)?;
            Ok(match &law.constraint {
                Some(c) => linalg::norm(&(c.h)(&y)),
                None => linalg::dist(&y, &law.xi),
            })
        })
        .collect()
}

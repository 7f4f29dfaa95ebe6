//! Planar polyped: a rigid body driven through massless limbs by forces applied at
//! `n` feet. Legs are split into two sets that alternate between stance (foot pinned)
//! and swing (foot a point mass).
//!
//! State `(x, y, theta, vx, vy, omega, q_1 .. q_n, dq_1 .. dq_n)`, feet in world axes.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::hybrid::{field_fn, level_fn, reset_fn, HybridSystem, LevelFn};
use crate::models::lls::LlsParams;
use crate::numerics::linalg::{self, Mat};

/// Set A in stance.
pub const STANCE_A: usize = 0;
/// Set B in stance.
pub const STANCE_B: usize = 1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolypedParams {
    pub m: f64,
    pub j: f64,
    /// Hip positions in the body frame.
    pub hips: Vec<[f64; 2]>,
    pub foot_mass: Vec<f64>,
    /// Swing targets in the body frame.
    pub targets: Vec<[f64; 2]>,
    /// Legs of set A.
    pub set_a: Vec<bool>,
}

impl PolypedParams {
    /// `n / 2` rows of leg pairs spread over `x` in `[-0.3, 0.3]` at `y = +-0.2`;
    /// legs whose row and side indices have an even sum form set A.
    pub fn grid(n: usize, lls: &LlsParams) -> Result<PolypedParams> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidInput(
                "grid layout needs an even number of at least four legs".into(),
            ));
        }
        let rows = n / 2;
        let mut hips = Vec::with_capacity(n);
        let mut set_a = Vec::with_capacity(n);
        for row in 0..rows {
            let x = 0.3 - 0.6 * row as f64 / (rows - 1) as f64;
            for side in 0..2 {
                hips.push([x, if side == 0 { 0.2 } else { -0.2 }]);
                set_a.push((row + side) % 2 == 0);
            }
        }
        let reach = 1.0 + lls.beta.sin();
        let targets = hips.iter().map(|h| [h[0], h[1] * reach]).collect();
        let p = PolypedParams {
            m: lls.m,
            j: lls.j,
            hips,
            foot_mass: vec![0.05; n],
            targets,
            set_a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.hips.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 4 {
            return Err(Error::InvalidInput(
                "a polyped needs at least four legs".into(),
            ));
        }
        if self.foot_mass.len() != n || self.targets.len() != n || self.set_a.len() != n {
            return Err(Error::InvalidInput(
                "per-leg parameter lists must have one entry per leg".into(),
            ));
        }
        if !(self.m > 0.0 && self.j > 0.0) || self.foot_mass.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidInput("masses must be positive".into()));
        }
        let na = self.set_a.iter().filter(|a| **a).count();
        if na < 2 || n - na < 2 {
            return Err(Error::InvalidInput(
                "each leg set needs at least two legs".into(),
            ));
        }
        for i in 0..n {
            for k in i + 1..n {
                if linalg::dist(&self.hips[i], &self.hips[k]) < 1e-12 {
                    return Err(Error::InvalidInput("hips must be pairwise distinct".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        6 + 4 * self.n()
    }

    /// Legs in stance in `domain`.
    pub fn stance(&self, domain: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&k| self.set_a[k] == (domain == STANCE_A))
            .collect()
    }

    pub fn swing(&self, domain: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&k| self.set_a[k] != (domain == STANCE_A))
            .collect()
    }
}

pub fn rotate(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Body wrench `(fx, fy, torque)` of a limb pushing its foot with force `u` from a hip
/// at world offset `r` from the centre of mass: the body receives `-u` at the hip.
pub fn limb_wrench(r: [f64; 2], u: [f64; 2]) -> [f64; 3] {
    [-u[0], -u[1], -(r[0] * u[1] - r[1] * u[0])]
}

/// Allocation matrix mapping body-frame stance inputs to the body-frame wrench.
pub fn allocation_matrix(p: &PolypedParams, legs: &[usize]) -> Mat {
    let mut a = Mat::zeros(3, 2 * legs.len());
    for (i, &k) in legs.iter().enumerate() {
        let h = p.hips[k];
        a[(0, 2 * i)] = -1.0;
        a[(1, 2 * i + 1)] = -1.0;
        a[(2, 2 * i)] = h[1];
        a[(2, 2 * i + 1)] = -h[0];
    }
    a
}

/// Minimum-norm stance inputs for a body-frame wrench.
#[derive(Debug, Clone)]
pub struct Allocator {
    pub legs: Vec<usize>,
    pub condition: f64,
    pinv: Mat,
}

pub const MAX_ALLOCATION_CONDITION: f64 = 1e10;

impl Allocator {
    pub fn new(p: &PolypedParams, legs: &[usize]) -> Result<Allocator> {
        let a = allocation_matrix(p, legs);
        let s = linalg::singular_values(&a)?;
        let condition = if s.len() < 3 || s[2] <= 0.0 {
            f64::INFINITY
        } else {
            s[0] / s[2]
        };
        if !(condition < MAX_ALLOCATION_CONDITION) {
            return Err(Error::WrenchInfeasible { condition });
        }
        Ok(Allocator {
            legs: legs.to_vec(),
            condition,
            pinv: linalg::pinv(&a, 1e-14)?,
        })
    }

    /// Body-frame inputs, two per stance leg.
    pub fn solve(&self, w: [f64; 3]) -> Vec<f64> {
        linalg::mat_vec(&self.pinv, &w)
    }
}

/// Inputs `(mu_k, nu_k)` in world axes, two per leg, for a domain and state.
pub type PolypedInputs = Arc<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>;

/// Body and foot accelerations for world-frame inputs `u` (two per leg).
pub fn accelerations(
    p: &PolypedParams,
    domain: usize,
    theta: f64,
    u: &[f64],
) -> ([f64; 3], Vec<f64>) {
    let mut w = [0.0; 3];
    let mut feet = vec![0.0; 2 * p.n()];
    for k in 0..p.n() {
        let uk = [u[2 * k], u[2 * k + 1]];
        let lw = limb_wrench(rotate(theta, p.hips[k]), uk);
        for i in 0..3 {
            w[i] += lw[i];
        }
        if p.set_a[k] != (domain == STANCE_A) {
            feet[2 * k] = uk[0] / p.foot_mass[k];
            feet[2 * k + 1] = uk[1] / p.foot_mass[k];
        }
    }
    ([w[0] / p.m, w[1] / p.m, w[2] / p.j], feet)
}

/// Open-loop polyped. Feet of the incoming stance set land plastically when `switch`
/// reaches zero; `inputs` supplies the limb forces.
pub fn make_polyped(
    p: &PolypedParams,
    inputs: PolypedInputs,
    switch: LevelFn,
) -> Result<HybridSystem> {
    p.validate()?;
    let n = p.n();
    let dim = p.dim();
    let mut sys = HybridSystem::new("polyped");
    for (dom, name) in [(STANCE_A, "set A stance"), (STANCE_B, "set B stance")] {
        let p2 = p.clone();
        let inp = inputs.clone();
        let field = move |x: &[f64], dx: &mut [f64]| {
            let u = inp(dom, x);
            let (b, feet) = accelerations(&p2, dom, x[2], &u);
            dx[..3].copy_from_slice(&x[3..6]);
            dx[3..6].copy_from_slice(&b);
            let swing = p2.swing(dom);
            for v in dx[6..].iter_mut() {
                *v = 0.0;
            }
            for k in swing {
                dx[6 + 2 * k] = x[6 + 2 * n + 2 * k];
                dx[6 + 2 * k + 1] = x[6 + 2 * n + 2 * k + 1];
                dx[6 + 2 * n + 2 * k] = feet[2 * k];
                dx[6 + 2 * n + 2 * k + 1] = feet[2 * k + 1];
            }
        };
        let d = sys.add_domain(name, dim, field_fn(field));
        debug_assert_eq!(d, dom);
    }
    for (dom, next) in [(STANCE_A, STANCE_B), (STANCE_B, STANCE_A)] {
        let face = sys.add_face(dom, "switch", switch.clone());
        let landing = p.stance(next);
        sys.add_guard(
            "exchange",
            dom,
            face,
            next,
            reset_fn(move |x| {
                let mut y = x.to_vec();
                for &k in &landing {
                    y[6 + 2 * n + 2 * k] = 0.0;
                    y[6 + 2 * n + 2 * k + 1] = 0.0;
                }
                y
            }),
        );
    }
    Ok(sys)
}

/// Unactuated polyped that never exchanges its stance set.
pub fn make_free_polyped(p: &PolypedParams) -> Result<HybridSystem> {
    let n = p.n();
    make_polyped(p, Arc::new(move |_, _| vec![0.0; 2 * n]), level_fn(|_| 1.0))
}

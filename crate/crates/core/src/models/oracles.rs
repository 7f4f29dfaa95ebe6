//! Small systems whose return maps are known in closed form.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hybrid::{field_fn, level_fn, reset_fn, HybridState, HybridSystem};
use crate::numerics::linalg::Mat;

pub const UPPER: usize = 0;
pub const LOWER: usize = 1;

/// Two half-planes under rigid rotation, glued along the x-axis by the radial
/// contraction `r -> x0 + lambda (r - x0) + theta`. The return map to either
/// vertical half-axis is `x0 + lambda^2 (r - x0) + (1 + lambda) theta` with period `2 pi`.
pub fn make_halfturn_oracle(lambda: f64, x0: f64) -> Result<HybridSystem> {
    make_controlled_halfturn(lambda, x0, 0.0)
}

pub fn make_controlled_halfturn(lambda: f64, x0: f64, theta: f64) -> Result<HybridSystem> {
    if !(lambda > 0.0 && lambda <= 1.0 && x0 > 0.0) {
        return Err(Error::InvalidInput(
            "half-turn oracle needs 0 < lambda <= 1 and x0 > 0".into(),
        ));
    }
    let rot = |x: &[f64], dx: &mut [f64]| {
        dx[0] = -x[1];
        dx[1] = x[0];
    };
    let mut s = HybridSystem::new("halfturn");
    let up = s.add_domain("upper", 2, field_fn(rot));
    let lo = s.add_domain("lower", 2, field_fn(rot));
    let fu = s.add_face(up, "y >= 0", level_fn(|x| x[1]));
    let fl = s.add_face(lo, "y <= 0", level_fn(|x| -x[1]));
    let radial = move |r: f64| x0 + lambda * (r - x0) + theta;
    let g0 = s.add_guard(
        "upper to lower",
        up,
        fu,
        lo,
        reset_fn(move |x| vec![-radial(-x[0]), 0.0]),
    );
    s.set_predicate(g0, level_fn(|x| -x[0]));
    let g1 = s.add_guard(
        "lower to upper",
        lo,
        fl,
        up,
        reset_fn(move |x| vec![radial(x[0]), 0.0]),
    );
    s.set_predicate(g1, level_fn(|x| x[0]));
    Ok(s)
}

pub fn halfturn_return(lambda: f64, x0: f64, theta: f64, r: f64) -> f64 {
    x0 + lambda * lambda * (r - x0) + (1.0 + lambda) * theta
}

/// Level function of the section on the positive y half-axis (crossed with x decreasing).
pub fn halfturn_upper_section_level(x: &[f64]) -> f64 {
    x[0]
}

pub fn halfturn_samples<R: Rng>(n: usize, rng: &mut R) -> Vec<HybridState> {
    (0..n)
        .map(|i| {
            let r = rng.random_range(0.2..3.0);
            if i % 2 == 0 {
                HybridState::new(UPPER, vec![-r, 0.0])
            } else {
                HybridState::new(LOWER, vec![r, 0.0])
            }
        })
        .collect()
}

pub const PG_A: usize = 0;
pub const PG_B: usize = 1;

/// A three-dimensional domain glued to a two-dimensional one by a projection.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProjectGlueParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl Default for ProjectGlueParams {
    fn default() -> Self {
        ProjectGlueParams {
            alpha: 0.5 * LN_2,
            beta: 1.0,
            gamma: 0.5 * LN_2,
            kappa: 1.0,
        }
    }
}

/// Domain A: `(u, v, w)` with `u' = -alpha u`, `v' = -beta v`, `w' = 1`, leaving at `w = 1`
/// into B by `(u, v, w) -> (u, 0)`. Domain B: `(p, q)` with `p' = -gamma p`, `q' = 1`,
/// leaving at `q = 1` into A by `(p, q) -> (p, kappa p, 0)`.
pub fn make_projectglue_oracle(p: &ProjectGlueParams) -> Result<HybridSystem> {
    let p = *p;
    if ![p.alpha, p.beta, p.gamma, p.kappa]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::InvalidInput("non-finite oracle parameter".into()));
    }
    let mut s = HybridSystem::new("projectglue");
    let a = s.add_domain(
        "A",
        3,
        field_fn(move |x, dx| {
            dx[0] = -p.alpha * x[0];
            dx[1] = -p.beta * x[1];
            dx[2] = 1.0;
        }),
    );
    let b = s.add_domain(
        "B",
        2,
        field_fn(move |x, dx| {
            dx[0] = -p.gamma * x[0];
            dx[1] = 1.0;
        }),
    );
    let fa = s.add_face(a, "w <= 1", level_fn(|x| 1.0 - x[2]));
    let fb = s.add_face(b, "q <= 1", level_fn(|x| 1.0 - x[1]));
    s.add_guard("project", a, fa, b, reset_fn(|x| vec![x[0], 0.0]));
    s.add_guard(
        "embed",
        b,
        fb,
        a,
        reset_fn(move |x| vec![x[0], p.kappa * x[0], 0.0]),
    );
    Ok(s)
}

/// Level of the section `w = 1/2` in domain A (crossed with `w` increasing).
pub fn projectglue_section_level(x: &[f64]) -> f64 {
    x[2] - 0.5
}

/// Closed-form derivative of the return map on `(u, v)` at `w = 1/2`.
pub fn projectglue_dp(p: &ProjectGlueParams) -> Mat {
    let c = (-p.alpha - p.gamma).exp();
    let d = p.kappa * (-0.5 * p.alpha - p.gamma - 0.5 * p.beta).exp();
    Mat::from_row_slice(2, 2, &[c, 0.0, d, 0.0])
}

pub fn projectglue_samples<R: Rng>(n: usize, rng: &mut R) -> Vec<HybridState> {
    (0..n)
        .map(|i| {
            let u = rng.random_range(-2.0..2.0);
            if i % 2 == 0 {
                HybridState::new(PG_A, vec![u, rng.random_range(-2.0..2.0), 1.0])
            } else {
                HybridState::new(PG_B, vec![u, 1.0])
            }
        })
        .collect()
}

/// Linear map realized as a hybrid system: a frozen state `x` plus a unit clock
/// `w`; at `w = 1` the reset applies `x -> C x + B theta` and rewinds the clock.
/// On the section `w = 1/2` the return map is exactly `C x + B theta`.
pub fn make_linear_clock_oracle(c: &Mat, b: &Mat, theta: &[f64]) -> Result<HybridSystem> {
    let n = c.nrows();
    if c.ncols() != n || b.nrows() != n || b.ncols() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.ncols(),
        });
    }
    let shift: Vec<f64> = (0..n)
        .map(|i| (0..theta.len()).map(|j| b[(i, j)] * theta[j]).sum())
        .collect();
    let c = c.clone();
    let mut s = HybridSystem::new("linear clock");
    let d = s.add_domain(
        "clock",
        n + 1,
        field_fn(move |_, dx| {
            dx.fill(0.0);
            dx[n] = 1.0;
        }),
    );
    let f = s.add_face(d, "w <= 1", level_fn(move |x| 1.0 - x[n]));
    s.add_guard(
        "tick",
        d,
        f,
        d,
        reset_fn(move |x| {
            let mut y: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| c[(i, j)] * x[j]).sum::<f64>() + shift[i])
                .collect();
            y.push(0.0);
            y
        }),
    );
    Ok(s)
}

/// Level of the clock section `w = 1/2` for a state of dimension `n + 1`.
pub fn clock_section_level(n: usize) -> impl Fn(&[f64]) -> f64 + Send + Sync + Clone {
    move |x: &[f64]| x[n] - 0.5
}

pub fn clock_samples<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<HybridState> {
    (0..count)
        .map(|_| {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            x.push(1.0);
            HybridState::new(0, x)
        })
        .collect()
}

/// `diag(0.5)` plus a 2x2 nilpotent Jordan block.
pub fn nilpotent_oracle_matrix() -> Mat {
    Mat::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
}

/// Companion pair that needs two cycles of a scalar input.
pub fn companion_pair() -> (Mat, Mat) {
    (
        Mat::from_row_slice(2, 2, &[0.0, 1.0, -0.3, 0.8]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
    )
}

/// Pair with a decoupled mode the input cannot reach.
pub fn uncontrollable_pair() -> (Mat, Mat) {
    (
        Mat::from_row_slice(2, 2, &[0.6, 0.0, 0.0, 1.2]),
        Mat::from_row_slice(2, 1, &[1.0, 0.0]),
    )
}

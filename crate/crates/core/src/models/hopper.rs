//! Vertical two-mass hopper: an upper mass `mu` on a damped spring above a foot mass `m`.
//!
//! Aerial state `(y, dy, x, dx)` with `y` the upper mass and `x` the foot height;
//! ground state `(y, dy)` with the foot pinned at zero.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hybrid::{field_fn, level_fn, reset_fn, HybridState, HybridSystem};
use crate::poincare::{PoincareMapHandle, Section};

pub const AERIAL: usize = 0;
pub const GROUND: usize = 1;
pub const TOUCHDOWN: usize = 0;
pub const LIFTOFF: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HopperParams {
    pub m: f64,
    pub mu: f64,
    pub k: f64,
    pub b: f64,
    pub l: f64,
    pub a: f64,
    pub g: f64,
}

impl Default for HopperParams {
    fn default() -> Self {
        HopperParams {
            m: 1.0,
            mu: 3.0,
            k: 10.0,
            b: 5.0,
            l: 2.0,
            a: 2.0,
            g: 2.0,
        }
    }
}

impl HopperParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.m, self.mu, self.k, self.b, self.l, self.a, self.g];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(
                "hopper parameters must be positive".into(),
            ));
        }
        if self.a <= 1.0 {
            return Err(Error::InvalidInput(
                "ground stiffness multiplier must exceed 1".into(),
            ));
        }
        Ok(())
    }

    /// The default parameters with a stiffer ground spring (`a = 3`), which admit a
    /// stable hopping orbit.
    pub fn stiff_ground() -> Self {
        HopperParams {
            a: 3.0,
            ..Default::default()
        }
    }

    /// Upper-mass height at which the ground face is reached.
    pub fn liftoff_height(&self) -> f64 {
        self.l + self.m * self.g / self.k
    }

    /// Mechanical energy of an aerial state (springs, gravity, kinetic).
    pub fn aerial_energy(&self, s: &[f64]) -> f64 {
        let (y, dy, x, dx) = (s[0], s[1], s[2], s[3]);
        let stretch = self.l - (y - x);
        0.5 * self.mu * dy * dy
            + 0.5 * self.m * dx * dx
            + 0.5 * self.k * stretch * stretch
            + self.mu * self.g * y
            + self.m * self.g * x
    }
}

pub fn make_hopper(p: &HopperParams) -> Result<HybridSystem> {
    p.validate()?;
    let p = *p;
    let mut s = HybridSystem::new("hopper");
    let air = s.add_domain(
        "aerial",
        4,
        field_fn(move |x, dx| {
            let spring = p.k * (p.l - (x[0] - x[2]));
            dx[0] = x[1];
            dx[1] = spring / p.mu - p.g;
            dx[2] = x[3];
            dx[3] = (-spring - p.b * x[3]) / p.m - p.g;
        }),
    );
    let ground = s.add_domain(
        "ground",
        2,
        field_fn(move |x, dx| {
            dx[0] = x[1];
            dx[1] = p.a * p.k * (p.l - x[0]) / p.mu - p.g;
        }),
    );
    let foot = s.add_face(air, "foot height", level_fn(|x| x[2]));
    let load = s.add_face(
        ground,
        "ground load",
        level_fn(move |x| p.m * p.g + p.k * (p.l - x[0])),
    );
    let td = s.add_guard(
        "touchdown",
        air,
        foot,
        ground,
        reset_fn(|x| vec![x[0], x[1]]),
    );
    s.set_predicate(td, level_fn(|x| -x[3]));
    let lo = s.add_guard(
        "liftoff",
        ground,
        load,
        air,
        reset_fn(|x| vec![x[0], x[1], 0.0, 0.0]),
    );
    s.set_predicate(lo, level_fn(|x| x[1]));
    Ok(s)
}

/// Mid-stance section `{dy = 0}` in the ground domain, crossed upward. Returns must
/// pass through liftoff then touchdown; ground-only oscillations are rejected.
pub fn midstance_map(p: &HopperParams) -> Result<PoincareMapHandle> {
    let sys = Arc::new(make_hopper(p)?);
    let sec = Section::level(
        &sys,
        GROUND,
        level_fn(|x| x[1]),
        1.0,
        &[0.5 * (p.l - p.mu * p.g / (p.a * p.k)), 0.0],
    )?;
    Ok(PoincareMapHandle::new(sys, sec).strict(vec![LIFTOFF, TOUCHDOWN]))
}

/// Section on the touchdown guard through the aerial state `guess`.
pub fn touchdown_map(p: &HopperParams, guess: &[f64]) -> Result<PoincareMapHandle> {
    let sys = Arc::new(make_hopper(p)?);
    let sec = Section::guard(&sys, TOUCHDOWN, guess)?;
    Ok(PoincareMapHandle::new(sys, sec).strict(vec![TOUCHDOWN, LIFTOFF]))
}

/// Random states on both guards, used to check the standing assumptions.
pub fn guard_samples<R: Rng>(p: &HopperParams, n: usize, rng: &mut R) -> Vec<HybridState> {
    let ylo = p.liftoff_height();
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                let y = rng.random_range(0.5 * p.l..ylo - 0.05);
                HybridState::new(
                    AERIAL,
                    vec![
                        y,
                        rng.random_range(-2.0..1.0),
                        0.0,
                        rng.random_range(-3.0..-0.1),
                    ],
                )
            } else {
                HybridState::new(GROUND, vec![ylo, rng.random_range(0.1..3.0)])
            }
        })
        .collect()
}

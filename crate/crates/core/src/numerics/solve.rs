//! Finite differences and Newton iterations.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::linalg::{self, Mat};

/// Fallible vector map used by the solvers.
pub type VecMap<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>>;

/// Relative step for central differences, about the cube root of machine epsilon.
pub const FD_STEP: f64 = 6e-6;

/// Central-difference Jacobian. `step` is relative to `max(1, |x_i|)`.
pub fn fd_jacobian(f: VecMap<'_>, x: &[f64], step: Option<f64>) -> Result<Mat> {
    let rel = step.unwrap_or(FD_STEP);
    if !(rel > 0.0) {
        return Err(Error::InvalidInput(
            "finite-difference step must be positive".into(),
        ));
    }
    let n = x.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..n {
        let h = rel * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        if fp.len() != fm.len() {
            return Err(Error::DimensionMismatch {
                expected: fp.len(),
                got: fm.len(),
            });
        }
        cols.push(
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
        xp[i] = x[i];
        xm[i] = x[i];
    }
    let m = cols
        .first()
        .map(|c| c.len())
        .unwrap_or_else(|| f(x).map(|v| v.len()).unwrap_or(0));
    Ok(Mat::from_fn(m, n, |r, c| cols[c][r]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
            fd_step: None,
        }
    }
}

enum StepRule {
    Strict,
    MinNorm,
}

/// Newton's method with backtracking for square systems. A numerically singular
/// Jacobian is an error.
pub fn newton_solve(f: VecMap<'_>, x0: &[f64], opts: &NewtonOptions) -> Result<NewtonResult> {
    iterate(f, x0, opts, StepRule::Strict)
}

/// Gauss-Newton with minimum-norm (pseudo-inverse) steps. Works for rank-deficient
/// and non-square systems, converging to a nearby zero rather than a unique one.
pub fn min_norm_newton(f: VecMap<'_>, x0: &[f64], opts: &NewtonOptions) -> Result<NewtonResult> {
    iterate(f, x0, opts, StepRule::MinNorm)
}

fn iterate(
    f: VecMap<'_>,
    x0: &[f64],
    opts: &NewtonOptions,
    rule: StepRule,
) -> Result<NewtonResult> {
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    let mut res = linalg::norm(&fx);
    if !res.is_finite() {
        return Err(Error::EvaluationFailure { t: 0.0, point: x });
    }
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(NewtonResult {
                x,
                residual: res,
                iterations: it,
            });
        }
        let j = fd_jacobian(f, &x, opts.fd_step)?;
        let rhs = nalgebra::DVector::from_vec(fx.clone());
        let dx: Vec<f64> = match rule {
            StepRule::Strict => {
                if j.nrows() != j.ncols() || linalg::numerical_rank(&j, 1e-12)? < j.ncols() {
                    return Err(Error::SingularJacobian);
                }
                let sol = j.clone().lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
                sol.iter().map(|v| -v).collect()
            }
            StepRule::MinNorm => {
                let p = linalg::pinv(&j, 1e-10)?;
                (p * rhs).iter().map(|v| -v).collect()
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            if let Ok(ft) = f(&xt) {
                let rt = linalg::norm(&ft);
                if rt.is_finite() && rt < res {
                    x = xt;
                    fx = ft;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                residual: res,
            });
        }
    }
    if res <= opts.tol {
        return Ok(NewtonResult {
            x,
            residual: res,
            iterations: opts.max_iter,
        });
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn jacobian_of_polynomial_map() {
        let f = |x: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![x[0] * x[0] * x[1], x[1].sin() + 3.0 * x[0]])
        };
        let j = fd_jacobian(&f, &[1.5, 0.3], None).unwrap();
        assert!((j[(0, 0)] - 2.0 * 1.5 * 0.3).abs() < 1e-9);
        assert!((j[(0, 1)] - 2.25).abs() < 1e-9);
        assert!((j[(1, 0)] - 3.0).abs() < 1e-9);
        assert!((j[(1, 1)] - 0.3f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn newton_finds_root() {
        let f = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![x[0] * x[0] - 2.0, x[0] * x[1] - 1.0]) };
        let r = newton_solve(&f, &[1.0, 1.0], &NewtonOptions::default()).unwrap();
        assert!((r.x[0] - 2f64.sqrt()).abs() < 1e-10);
        assert!((r.x[1] - 1.0 / 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn strict_newton_rejects_singular() {
        let f = |x: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![x[0] + x[1] - 1.0, 2.0 * x[0] + 2.0 * x[1] - 2.5])
        };
        assert_eq!(
            newton_solve(&f, &[0.0, 0.0], &NewtonOptions::default()),
            Err(Error::SingularJacobian)
        );
    }

    #[test]
    fn min_norm_handles_underdetermined() {
        let f = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![x[0] + 2.0 * x[1] - 5.0]) };
        let r = min_norm_newton(&f, &[0.0, 0.0], &NewtonOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-10 && (r.x[1] - 2.0).abs() < 1e-10);
    }
}

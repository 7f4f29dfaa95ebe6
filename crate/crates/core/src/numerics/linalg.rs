//! Dense linear algebra helpers on top of nalgebra.

use alloc::vec::Vec;
use core::cmp::Ordering;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use nalgebra::{linalg::Schur, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Default relative tolerance for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn dist(&self, other: &Eigenvalue) -> f64 {
        (self.re - other.re).hypot(self.im - other.im)
    }
}

fn cmp_eig(a: &Eigenvalue, b: &Eigenvalue) -> Ordering {
    b.modulus()
        .partial_cmp(&a.modulus())
        .unwrap_or(Ordering::Equal)
        .then(b.re.partial_cmp(&a.re).unwrap_or(Ordering::Equal))
        .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
}

/// Eigenvalues sorted by decreasing modulus.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Eigenvalue>> {
    check_square(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConvergenceFailure);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::ConvergenceFailure)?;
    let mut out: Vec<Eigenvalue> = schur
        .complex_eigenvalues()
        .iter()
        .map(|c| Eigenvalue { re: c.re, im: c.im })
        .collect();
    out.sort_by(cmp_eig);
    Ok(out)
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.first().map(|e| e.modulus()).unwrap_or(0.0))
}

/// Full SVD of `m` padded to a square matrix so that `v` is complete.
struct FullSvd {
    sigma: Vec<f64>,
    u: Mat,
    v: Mat,
}

fn full_svd(m: &Mat) -> Result<FullSvd> {
    let n = m.nrows().max(m.ncols());
    let mut sq = Mat::zeros(n, n);
    sq.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    let svd = nalgebra::SVD::try_new(sq, true, true, f64::EPSILON, 10_000)
        .ok_or(Error::ConvergenceFailure)?;
    let u = svd.u.ok_or(Error::ConvergenceFailure)?;
    let vt = svd.v_t.ok_or(Error::ConvergenceFailure)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(Ordering::Equal)
    });
    let sigma = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let u = Mat::from_fn(n, n, |r, c| u[(r, idx[c])]);
    let v = Mat::from_fn(n, n, |r, c| vt[(idx[c], r)]);
    Ok(FullSvd { sigma, u, v })
}

/// Singular values in decreasing order (length `min(rows, cols)`).
pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConvergenceFailure);
    }
    let svd = nalgebra::SVD::try_new(m.clone(), false, false, f64::EPSILON, 10_000)
        .ok_or(Error::ConvergenceFailure)?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    Ok(s)
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn rank_from_singular_values(s: &[f64], rel_tol: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= f64::MIN_POSITIVE {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Rank with the threshold `rel_tol * max(sigma_max, 1)`. Linearized return maps live
/// on the scale of the identity, so a Jacobian made only of round-off has rank zero.
pub fn unit_scaled_rank(s: &[f64], rel_tol: f64) -> usize {
    let thr = rel_tol * s.first().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|&&v| v > thr).count()
}

pub fn numerical_rank(m: &Mat, rel_tol: f64) -> Result<usize> {
    Ok(rank_from_singular_values(&singular_values(m)?, rel_tol))
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pinv(m: &Mat, rel_tol: f64) -> Result<Mat> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Mat::zeros(c, r));
    }
    let f = full_svd(m)?;
    let smax = f.sigma[0];
    let n = f.sigma.len();
    let mut out = Mat::zeros(n, n);
    for (i, &s) in f.sigma.iter().enumerate() {
        if smax > 0.0 && s > rel_tol * smax {
            let vi = f.v.column(i);
            let ui = f.u.column(i);
            out += (vi * ui.transpose()) / s;
        }
    }
    Ok(out.view((0, 0), (c, r)).into_owned())
}

/// Orthonormal basis of the numerical range, one column per direction.
pub fn range_basis(m: &Mat, rel_tol: f64) -> Result<Mat> {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return Ok(Mat::zeros(rows, 0));
    }
    let f = full_svd(m)?;
    let r = rank_from_singular_values(&f.sigma, rel_tol);
    Ok(f.u.view((0, 0), (rows, r)).into_owned())
}

/// Orthonormal basis of the numerical kernel.
pub fn kernel_basis(m: &Mat, rel_tol: f64) -> Result<Mat> {
    let cols = m.ncols();
    if cols == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if m.nrows() == 0 {
        return Ok(Mat::identity(cols, cols));
    }
    let f = full_svd(m)?;
    let r = rank_from_singular_values(&f.sigma, rel_tol).min(cols);
    // Padded columns beyond `cols` live in the zero block; keep the top rows only.
    let vk = f.v.view((0, r), (cols, f.sigma.len() - r)).into_owned();
    orthonormalize(&vk, 1e-10)
}

/// Leading `r` left singular vectors and trailing right singular vectors of a square
/// matrix whose rank is already known to be `r`.
pub fn split_bases(m: &Mat, r: usize) -> Result<(Mat, Mat)> {
    check_square(m)?;
    let n = m.nrows();
    if r > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: r,
        });
    }
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Mat::zeros(0, 0)));
    }
    let f = full_svd(m)?;
    Ok((
        f.u.columns(0, r).into_owned(),
        f.v.columns(r, n - r).into_owned(),
    ))
}

/// Gram-Schmidt with re-orthogonalization; drops columns that become negligible.
pub fn orthonormalize(m: &Mat, drop_tol: f64) -> Result<Mat> {
    let n = m.nrows();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > drop_tol {
            cols.push(v / nv);
        }
    }
    let mut out = Mat::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    Ok(out)
}

pub fn mat_pow(m: &Mat, k: usize) -> Mat {
    let n = m.nrows();
    let mut out = Mat::identity(n, n);
    for _ in 0..k {
        out = &out * m;
    }
    out
}

pub fn check_square(m: &Mat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(())
}

pub fn spectral_norm(m: &Mat) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Condition number sigma_max / sigma_min over the first `min(rows, cols)` values.
pub fn condition_number(m: &Mat) -> Result<f64> {
    let s = singular_values(m)?;
    match (s.first(), s.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => Ok(a / b),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Euclidean remainder of `a` modulo a positive `p`, in `[0, p)`.
pub fn rem_euclid(a: f64, p: f64) -> f64 {
    let r = a - p * (a / p).floor();
    if r >= p {
        0.0
    } else {
        r
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub fn to_mat(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::InvalidInput("ragged matrix".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

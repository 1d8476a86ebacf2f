//! Dense symmetric-matrix helpers.
//!
//! The market laws handled by this crate are strongly graded: the liability
//! coordinate carries variances around 1e10 while log gross returns sit near
//! 1e-3. Every tolerance below is therefore scaled by the diagonal of the
//! matrix it applies to, never by the trace or a global norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Entrywise asymmetry tolerance, relative to `sqrt(c_ii * c_jj)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Smallest admissible eigenvalue as a (negative) fraction of the diagonal
/// mass of its eigenvector.
pub const PSD_TOL: f64 = 1e-10;

/// Relative pivot / eigenvalue floor used when deciding that a direction is
/// numerically null. Scaled by the diagonal mass of that direction.
pub const NULL_TOL: f64 = 1e-12;

pub fn ensure_square(m: &DMatrix<f64>, field: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::validation(
            field,
            format!("matrix must be square, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn ensure_finite(m: &DMatrix<f64>, field: &str) -> Result<()> {
    if let Some((idx, v)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        let (r, c) = (idx % m.nrows(), idx / m.nrows());
        return Err(Error::validation(
            field,
            format!("non-finite entry {v} at ({r}, {c})"),
        ));
    }
    Ok(())
}

pub fn ensure_symmetric(m: &DMatrix<f64>, field: &str) -> Result<()> {
    ensure_square(m, field)?;
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            let scale = (m[(i, i)] * m[(j, j)])
                .abs()
                .sqrt()
                .max(a.abs())
                .max(b.abs());
            if (a - b).abs() > SYMMETRY_TOL * scale {
                return Err(Error::validation(
                    field,
                    format!("matrix is not symmetric: ({i},{j}) = {a} but ({j},{i}) = {b}"),
                ));
            }
        }
    }
    Ok(())
}

/// Rejects matrices with an eigenvalue below `-PSD_TOL` times the diagonal
/// mass of its eigenvector.
pub fn ensure_psd(m: &DMatrix<f64>, field: &str) -> Result<()> {
    let eig = sym_eigen(m);
    let scales = eigen_scales(m, &eig.eigenvectors);
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        if *l < -PSD_TOL * scales[k] {
            return Err(Error::validation(
                field,
                format!("matrix is not positive semidefinite (eigenvalue {l:e})"),
            ));
        }
    }
    Ok(())
}

/// Full validation of a covariance-like input: square, finite, symmetric, PSD.
pub fn ensure_covariance(m: &DMatrix<f64>, field: &str) -> Result<()> {
    ensure_finite(m, field)?;
    ensure_symmetric(m, field)?;
    ensure_psd(m, field)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub struct SymEigen {
    pub eigenvalues: DVector<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
}

/// Eigendecomposition of the symmetric part of `m` by cyclic Jacobi
/// rotations.
///
/// A rotation is skipped once `|a_pq| <= eps * sqrt(|a_pp a_qq|)`, so each
/// eigenvalue is resolved relative to its own diagonal scale. QR-based
/// solvers only reach accuracy relative to the largest eigenvalue, which
/// destroys the small block of graded matrices such as `C^{1/2} C_i C^{1/2}`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    let mut a = symmetrize(m);
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                if apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    if r != p && r != q {
                        let (arp, arq) = (a[(r, p)], a[(r, q)]);
                        a[(r, p)] = c * arp - s * arq;
                        a[(r, q)] = s * arp + c * arq;
                        a[(p, r)] = a[(r, p)];
                        a[(q, r)] = a[(r, q)];
                    }
                    let (vrp, vrq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
        if !rotated {
            break;
        }
    }
    SymEigen {
        eigenvalues: a.diagonal(),
        eigenvectors: v,
    }
}

/// Diagonal mass `sum_j v_j^2 m_jj` of each eigenvector; the scale against
/// which an eigenvalue is judged null.
fn eigen_scales(m: &DMatrix<f64>, vecs: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    DVector::from_fn(n, |k, _| {
        (0..n).map(|j| vecs[(j, k)].powi(2) * m[(j, j)].abs()).sum()
    })
}

fn rebuild(vecs: &DMatrix<f64>, vals: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, k| vecs[(i, k)] * vals[k]);
    symmetrize(&(scaled * vecs.transpose()))
}

/// Symmetric PSD square root by eigendecomposition. Negative eigenvalues and
/// those below `NULL_TOL` times their eigenvector's diagonal mass are set to
/// zero: the root of round-off in a null direction would otherwise show up
/// at `sqrt(eps)` relative size.
pub fn psd_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(c, "matrix")?;
    ensure_symmetric(c, "matrix")?;
    Ok(psd_sqrt_unchecked(c))
}

pub(crate) fn psd_sqrt_unchecked(c: &DMatrix<f64>) -> DMatrix<f64> {
    psd_sqrt_and_pinv(c).0
}

/// Returns `(C^{1/2}, (C^{1/2})^+)`: the PSD root and the Moore-Penrose
/// inverse of that root. Eigenvalues below `NULL_TOL` times their
/// eigenvector's diagonal mass are treated as exact zeros.
pub(crate) fn psd_sqrt_and_pinv(c: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = sym_eigen(c);
    let scales = eigen_scales(c, &eig.eigenvectors);
    let n = c.nrows();
    let mut roots = DVector::zeros(n);
    let mut inv_roots = DVector::zeros(n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l > NULL_TOL * scales[k] && l > 0.0 {
            roots[k] = l.sqrt();
            inv_roots[k] = 1.0 / roots[k];
        }
    }
    (
        rebuild(&eig.eigenvectors, &roots),
        rebuild(&eig.eigenvectors, &inv_roots),
    )
}

/// Lower-triangular `L` with `L Lᵀ = C` for symmetric PSD `C`.
///
/// Pivots that fall below `NULL_TOL * c_jj` are treated as exact zeros, which
/// handles rank-deficient covariances without jitter. Returns `None` when a
/// pivot is clearly negative (the input is not PSD).
pub fn psd_cholesky(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = c.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let diag = c[(j, j)];
        let mut d = diag;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        let tol = NULL_TOL * diag.abs();
        if d > tol {
            let pivot = d.sqrt();
            l[(j, j)] = pivot;
            for i in (j + 1)..n {
                let mut s = c[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / pivot;
            }
        } else if d < -1e3 * tol.max(f64::MIN_POSITIVE) {
            return None;
        }
    }
    Some(l)
}

/// Nearest PSD correlation matrix by one eigenvalue-clamp pass followed by
/// diagonal renormalisation.
pub fn project_correlation(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = sym_eigen(m);
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let psd = rebuild(&eig.eigenvectors, &clamped);
    let d = DVector::from_fn(n, |i, _| {
        let v = psd[(i, i)];
        if v > 0.0 {
            1.0 / v.sqrt()
        } else {
            0.0
        }
    });
    let mut out = DMatrix::from_fn(n, n, |i, j| psd[(i, j)] * d[i] * d[j]);
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    symmetrize(&out)
}

/// Frobenius norm of `D^{-1/2} (a - b) D^{-1/2}` with `D = diag(a)`; a
/// scale-free distance between two covariance matrices.
pub fn scaled_frobenius_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let v = a[(i, i)].abs().max(b[(i, i)].abs());
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = (a[(i, j)] - b[(i, j)]) * s[i] * s[j];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

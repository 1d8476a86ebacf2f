//! Gaussian models, the closed-form Wasserstein-2 distance between them, and
//! seeded sampling.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// A multivariate normal law `N(mean, cov)`.
///
/// Construction validates the invariants once; afterwards the model is
/// immutable and cheap to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct GaussianModel {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// JSON shape: `{"mean": [...], "cov": [[...], ...]}` with row-major `cov`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GaussianRepr> for GaussianModel {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        let dim = r.mean.len();
        if r.cov.len() != dim || r.cov.iter().any(|row| row.len() != dim) {
            return Err(Error::validation(
                "cov",
                format!("covariance must be {dim}x{dim} to match `mean`"),
            ));
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| r.cov[i][j]);
        GaussianModel::new(DVector::from_vec(r.mean), cov)
    }
}

impl From<GaussianModel> for GaussianRepr {
    fn from(m: GaussianModel) -> Self {
        let d = m.dim();
        GaussianRepr {
            mean: m.mean.iter().copied().collect(),
            cov: (0..d)
                .map(|i| (0..d).map(|j| m.cov[(i, j)]).collect())
                .collect(),
        }
    }
}

impl GaussianModel {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::validation("mean", "dimension must be positive"));
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "GaussianModel",
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        if let Some(v) = mean.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation("mean", format!("non-finite entry {v}")));
        }
        linalg::ensure_covariance(&cov, "cov")?;
        Ok(Self { mean, cov })
    }

    /// Builds a model from a covariance produced by this crate's own numerics:
    /// the matrix is symmetrised before validation.
    pub(crate) fn from_computed(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(mean, linalg::symmetrize(&cov))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Draws `count` i.i.d. rows from the model.
    ///
    /// Rows are `mean + L z` with `L` the (semidefinite) lower Cholesky factor
    /// of `cov` and `z` standard normal from the stream seeded by `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::validation("count", "must be at least 1"));
        }
        let d = self.dim();
        let factor = self.sampling_factor();
        let mut rng = rng::stream(seed, &[]);
        let mut out = DMatrix::<f64>::zeros(count, d);
        let mut z = vec![0.0; d];
        for r in 0..count {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..d {
                let mut acc = self.mean[i];
                for (k, zk) in z.iter().enumerate().take(i + 1) {
                    acc += factor[(i, k)] * zk;
                }
                out[(r, i)] = acc;
            }
        }
        Ok(out)
    }

    fn sampling_factor(&self) -> DMatrix<f64> {
        if let Some(l) = linalg::psd_cholesky(&self.cov) {
            return l;
        }
        let d = self.dim();
        let jitter = 1e-12 * self.cov.trace().abs() / d as f64;
        let mut c = self.cov.clone();
        for i in 0..d {
            c[(i, i)] += jitter;
        }
        // cov passed PSD validation, so after jitter the factorisation only
        // fails on pathological rounding; fall back to the eigen root
        linalg::psd_cholesky(&c).unwrap_or_else(|| linalg::psd_sqrt_unchecked(&self.cov))
    }
}

/// Squared Wasserstein-2 distance between two Gaussians:
/// `|m_a - m_b|^2 + tr(C_a + C_b - 2 (C_a^{1/2} C_b C_a^{1/2})^{1/2})`.
pub fn w2_distance_sq(a: &GaussianModel, b: &GaussianModel) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "w2_distance_sq",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let shift = (&a.mean - &b.mean).norm_squared();
    let ra = linalg::psd_sqrt_unchecked(&a.cov);
    let cross = linalg::psd_sqrt_unchecked(&linalg::symmetrize(&(&ra * &b.cov * &ra)));
    let bures = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok(shift + bures.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(m: f64, var: f64) -> GaussianModel {
        GaussianModel::new(
            DVector::from_element(1, m),
            DMatrix::from_element(1, 1, var),
        )
        .unwrap()
    }

    #[test]
    fn construction_validates() {
        let bad_dim = GaussianModel::new(DVector::zeros(2), DMatrix::identity(3, 3));
        assert!(matches!(bad_dim, Err(Error::DimensionMismatch { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianModel::new(DVector::zeros(2), asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianModel::new(DVector::zeros(2), indefinite).is_err());
        assert!(GaussianModel::new(DVector::zeros(0), DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn json_round_trip_and_shape() {
        let m = GaussianModel::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"mean":[1.0,-2.0],"cov":[[2.0,0.5],[0.5,1.0]]}"#);
        let back: GaussianModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let ragged = r#"{"mean":[0.0,0.0],"cov":[[1.0],[0.0,1.0]]}"#;
        assert!(serde_json::from_str::<GaussianModel>(ragged).is_err());
    }

    #[test]
    fn w2_identical_models_is_zero() {
        let m = GaussianModel::new(
            DVector::from_vec(vec![0.3, 1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
        )
        .unwrap();
        assert!(w2_distance_sq(&m, &m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn w2_scalar_closed_form() {
        // (0-1)^2 + (1-2)^2
        let d = w2_distance_sq(&scalar(0.0, 1.0), &scalar(1.0, 4.0)).unwrap();
        assert_relative_eq!(d, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn w2_translation_only() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.7]);
        let a = GaussianModel::new(DVector::from_vec(vec![1.0, 2.0]), cov.clone()).unwrap();
        let b = GaussianModel::new(DVector::from_vec(vec![4.0, -2.0]), cov).unwrap();
        assert_relative_eq!(w2_distance_sq(&a, &b).unwrap(), 25.0, epsilon = 1e-10);
    }

    #[test]
    fn w2_dimension_mismatch() {
        let a = scalar(0.0, 1.0);
        let b = GaussianModel::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            w2_distance_sq(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_sampling_returns_mean() {
        let m =
            GaussianModel::new(DVector::from_vec(vec![1.0, -3.0]), DMatrix::zeros(2, 2)).unwrap();
        let x = m.sample(50, 9).unwrap();
        for r in 0..50 {
            assert_eq!(x[(r, 0)], 1.0);
            assert_eq!(x[(r, 1)], -3.0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = GaussianModel::new(
            DVector::from_vec(vec![0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]),
        )
        .unwrap();
        assert_eq!(m.sample(100, 42).unwrap(), m.sample(100, 42).unwrap());
        assert_ne!(m.sample(100, 42).unwrap(), m.sample(100, 43).unwrap());
        assert!(m.sample(0, 1).is_err());
    }

    #[test]
    fn standard_normal_sample_mean() {
        // 5 sigma for 1e5 draws is 5/sqrt(1e5) ~ 0.0158
        let x = scalar(0.0, 1.0).sample(100_000, 2024).unwrap();
        let mean = x.column(0).mean();
        assert!(mean.abs() < 0.02, "{mean}");
    }
}

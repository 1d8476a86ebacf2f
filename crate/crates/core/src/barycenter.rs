//! Weighted Wasserstein-2 barycenters of Gaussian prior sets.
//!
//! The barycenter mean is the weighted average of the prior means. The
//! covariance is the fixed point of
//!
//! ```text
//! C = sum_i w_i (C^{1/2} C_i C^{1/2})^{1/2}
//! ```
//!
//! found with the iteration
//! `C_{k+1} = C_k^{-1/2} (sum_i w_i (C_k^{1/2} C_i C_k^{1/2})^{1/2})^2 C_k^{-1/2}`
//! started from the linear mixture `sum_i w_i C_i`. Inverse roots are
//! Moore-Penrose inverses, so rank-deficient priors are handled on their
//! joint range.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{w2_distance_sq, GaussianModel};
use crate::linalg;

/// Tolerance on `|sum(w) - 1|`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A set of prior models with weights on the unit simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorSetRepr", into = "PriorSetRepr")]
pub struct PriorSet {
    models: Vec<GaussianModel>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PriorSetRepr {
    weights: Vec<f64>,
    models: Vec<GaussianModel>,
}

impl TryFrom<PriorSetRepr> for PriorSet {
    type Error = Error;
    fn try_from(r: PriorSetRepr) -> Result<Self> {
        PriorSet::new(r.models, r.weights)
    }
}

impl From<PriorSet> for PriorSetRepr {
    fn from(p: PriorSet) -> Self {
        PriorSetRepr {
            weights: p.weights,
            models: p.models,
        }
    }
}

impl PriorSet {
    pub fn new(models: Vec<GaussianModel>, weights: Vec<f64>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::validation(
                "models",
                "prior set must contain at least one model",
            ));
        }
        if weights.len() != models.len() {
            return Err(Error::validation(
                "weights",
                format!("{} weights for {} models", weights.len(), models.len()),
            ));
        }
        let dim = models[0].dim();
        if let Some((i, m)) = models.iter().enumerate().find(|(_, m)| m.dim() != dim) {
            return Err(Error::validation(
                format!("models[{i}]"),
                format!(
                    "dimension {} differs from models[0] dimension {dim}",
                    m.dim()
                ),
            ));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(Error::validation(
                format!("weights[{i}]"),
                format!("weight {w} is outside the unit simplex (must be >= 0)"),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::validation(
                "weights",
                format!("weights must lie on the unit simplex but sum to {sum}"),
            ));
        }
        Ok(Self { models, weights })
    }

    /// Equal weights `1/N`.
    pub fn equally_weighted(models: Vec<GaussianModel>) -> Result<Self> {
        let n = models.len();
        if n == 0 {
            return Err(Error::validation(
                "models",
                "prior set must contain at least one model",
            ));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // absorb the rounding residue so the simplex check is exact
        let residue = 1.0 - weights.iter().sum::<f64>();
        weights[n - 1] += residue;
        Self::new(models, weights)
    }

    pub fn models(&self) -> &[GaussianModel] {
        &self.models
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarycenterOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycenterResult {
    pub model: GaussianModel,
    pub frechet_variance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Scaled Frobenius change of the last fixed-point update.
    pub final_change: f64,
}

/// `sum_i w_i W2^2(candidate, Q_i)`.
pub fn frechet_variance(candidate: &GaussianModel, priors: &PriorSet) -> Result<f64> {
    if candidate.dim() != priors.dim() {
        return Err(Error::DimensionMismatch {
            context: "frechet_variance",
            expected: priors.dim(),
            found: candidate.dim(),
        });
    }
    let mut acc = 0.0;
    for (m, w) in priors.models.iter().zip(&priors.weights) {
        if *w > 0.0 {
            acc += w * w2_distance_sq(candidate, m)?;
        }
    }
    Ok(acc)
}

fn weighted_mean(priors: &PriorSet) -> DVector<f64> {
    let mut mean = DVector::zeros(priors.dim());
    for (m, w) in priors.models.iter().zip(&priors.weights) {
        mean.axpy(*w, m.mean(), 1.0);
    }
    mean
}

fn fixed_point_step(cov: &DMatrix<f64>, priors: &PriorSet) -> DMatrix<f64> {
    let (root, inv_root) = linalg::psd_sqrt_and_pinv(cov);
    let mut acc = DMatrix::zeros(cov.nrows(), cov.ncols());
    for (m, w) in priors.models.iter().zip(&priors.weights) {
        if *w > 0.0 {
            let inner = linalg::symmetrize(&(&root * m.cov() * &root));
            acc += linalg::psd_sqrt_unchecked(&inner) * *w;
        }
    }
    linalg::symmetrize(&(&inv_root * &acc * &acc * &inv_root))
}

/// Number of consecutive growing updates that counts as divergence.
const DIVERGENCE_STREAK: usize = 3;

/// Weighted Wasserstein barycenter of a Gaussian prior set.
///
/// Convergence is measured with [`linalg::scaled_frobenius_diff`] so that the
/// small log-return block is held to the same relative tolerance as the large
/// liability block. If `max_iter` is hit, the iterate with the smallest
/// change is returned with `converged = false`.
pub fn barycenter(priors: &PriorSet, opts: BarycenterOptions) -> Result<BarycenterResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::validation("tol", "must be positive"));
    }
    let mean = weighted_mean(priors);

    let mut cov = DMatrix::zeros(priors.dim(), priors.dim());
    for (m, w) in priors.models.iter().zip(&priors.weights) {
        cov += m.cov() * *w;
    }

    let mut best = (f64::INFINITY, cov.clone());
    let mut prev_change = f64::INFINITY;
    let mut streak = 0;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut converged = false;

    for k in 1..=opts.max_iter {
        let next = fixed_point_step(&cov, priors);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                "barycenter",
                Some(k),
                "non-finite covariance iterate",
            ));
        }
        let change = linalg::scaled_frobenius_diff(&next, &cov);
        iterations = k;
        last_change = change;
        cov = next;
        if change < best.0 {
            best = (change, cov.clone());
        }
        if change < opts.tol {
            converged = true;
            break;
        }
        // growth below ~100 tol is rounding noise, not divergence
        if change > prev_change && change > 100.0 * opts.tol {
            streak += 1;
            if streak >= DIVERGENCE_STREAK {
                return Err(Error::numerical(
                    "barycenter",
                    Some(k),
                    format!("fixed-point change grew {DIVERGENCE_STREAK} times in a row (last {change:e})"),
                ));
            }
        } else {
            streak = 0;
        }
        prev_change = change;
    }

    let (final_change, cov) = if converged { (last_change, cov) } else { best };
    let model = GaussianModel::from_computed(mean, cov)?;
    let frechet_variance = frechet_variance(&model, priors)?;
    Ok(BarycenterResult {
        model,
        frechet_variance,
        iterations,
        converged,
        final_change,
    })
}

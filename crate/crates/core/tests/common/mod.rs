//! Independent oracles shared by the integration tests. None of these call
//! into the solver code paths they are compared against.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use robust_alm::market::RateParams;
use robust_alm::MomentBundle;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scalar barycenter: mean and standard deviation are both weighted averages.
pub fn scalar_barycenter(means: &[f64], sds: &[f64], weights: &[f64]) -> (f64, f64) {
    let m = means.iter().zip(weights).map(|(m, w)| m * w).sum();
    let s: f64 = sds.iter().zip(weights).map(|(s, w)| s * w).sum();
    (m, s * s)
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.qr().q()
}

/// Commuting barycenter in a shared eigenbasis `q`: the root of the
/// barycenter is the weighted average of the roots of the diagonals.
pub fn commuting_barycenter(q: &DMatrix<f64>, diags: &[Vec<f64>], weights: &[f64]) -> DMatrix<f64> {
    let d = q.nrows();
    let root = DVector::from_fn(d, |k, _| {
        diags
            .iter()
            .zip(weights)
            .map(|(v, w)| w * v[k].sqrt())
            .sum()
    });
    q * DMatrix::from_diagonal(&root.component_mul(&root)) * q.transpose()
}

/// A normal law discretised on `points` equally spaced atoms over
/// `mean ± 8 sd`, masses proportional to the density.
pub fn discretise_normal(mean: f64, sd: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = mean - 8.0 * sd;
    let h = 16.0 * sd / (points - 1) as f64;
    let x: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    let mut p: Vec<f64> = x
        .iter()
        .map(|v| (-0.5 * ((v - mean) / sd).powi(2)).exp())
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    (x, p)
}

/// Squared W2 between two sorted discrete laws via the north-west-corner
/// coupling, which is optimal for convex costs on the line.
pub fn w2_sq_northwest(xa: &[f64], pa: &[f64], xb: &[f64], pb: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (pa[0], pb[0]);
    let mut cost = 0.0;
    loop {
        let t = ra.min(rb);
        cost += t * (xa[i] - xb[j]).powi(2);
        ra -= t;
        rb -= t;
        if ra <= 0.0 {
            i += 1;
            if i == xa.len() {
                break;
            }
            ra = pa[i];
        }
        if rb <= 0.0 {
            j += 1;
            if j == xb.len() {
                break;
            }
            rb = pb[j];
        }
    }
    cost
}

/// Moments of a jointly Gaussian `(S, L)` with the given means and
/// covariance (S first), in raw form.
pub fn gaussian_bundle(mean: &DVector<f64>, cov: &DMatrix<f64>) -> MomentBundle {
    let d = mean.len() - 1;
    let m_s = mean.rows(0, d).into_owned();
    let m_l = mean[d];
    MomentBundle {
        c_s: cov.view((0, 0), (d, d)) + &m_s * m_s.transpose(),
        c_sl: cov.view((0, d), (d, 1)).column(0) + &m_s * m_l,
        m_l2: cov[(d, d)] + m_l * m_l,
        m_s,
        m_l,
        sample_count: 0,
    }
}

/// A random bundle of `d` assets: gross returns near one with a few
/// percent of volatility, and a liability of about `x0` correlated with them.
pub fn random_bundle(d: usize, x0: f64, rng: &mut impl Rng) -> MomentBundle {
    let mut mean = DVector::from_fn(d + 1, |_, _| rng.random_range(0.98..1.15));
    mean[d] = x0 * rng.random_range(0.85..1.0);
    let mut scale = DVector::from_element(d + 1, 1.0);
    scale[d] = 0.05 * x0;
    let a = DMatrix::from_fn(d + 1, d + 1, |i, j| {
        let g: f64 = rng.sample(StandardNormal);
        g * if j == i { 0.2 } else { 0.06 }
    });
    let cov =
        DMatrix::from_diagonal(&scale) * (&a * a.transpose()) * DMatrix::from_diagonal(&scale);
    gaussian_bundle(&mean, &cov)
}

pub struct QpOracle {
    pub theta: DVector<f64>,
    pub floor_active: bool,
}

/// Active-set solution of
/// `min θᵀC_Sθ - 2θᵀ(C_SL + ζ m_S)  s.t. 1ᵀθ = x0, m_Sᵀθ - m_L ≥ ζ`
/// by solving the bordered KKT system with and without the floor row.
pub fn qp_oracle(b: &MomentBundle, zeta: f64, x0: f64) -> QpOracle {
    let d = b.m_s.len();
    let solve = |with_floor: bool| {
        let k = d + 1 + usize::from(with_floor);
        let mut kkt = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        kkt.view_mut((0, 0), (d, d)).copy_from(&(&b.c_s * 2.0));
        for i in 0..d {
            kkt[(i, d)] = 1.0;
            kkt[(d, i)] = 1.0;
            rhs[i] = 2.0 * (b.c_sl[i] + zeta * b.m_s[i]);
        }
        rhs[d] = x0;
        if with_floor {
            for i in 0..d {
                kkt[(i, d + 1)] = -b.m_s[i];
                kkt[(d + 1, i)] = b.m_s[i];
            }
            rhs[d + 1] = zeta + b.m_l;
        }
        kkt.lu().solve(&rhs).expect("nonsingular KKT system")
    };
    let free = solve(false);
    let theta = free.rows(0, d).into_owned();
    if theta.dot(&b.m_s) - b.m_l >= zeta {
        return QpOracle {
            theta,
            floor_active: false,
        };
    }
    let bound = solve(true);
    assert!(bound[d + 1] >= 0.0, "floor multiplier must be nonnegative");
    QpOracle {
        theta: bound.rows(0, d).into_owned(),
        floor_active: true,
    }
}

/// Euler-Maruyama paths of `dr = κ(R - r)dt + σ_rᵀ dW`, with `W` correlated
/// by `chol chol ᵀ`, returning `∫_0^T r dt` (trapezoid rule) per path.
pub fn euler_integrated_rate(
    rate: &RateParams,
    chol: &DMatrix<f64>,
    horizon: f64,
    paths: usize,
    steps: usize,
    seed: u64,
) -> Vec<f64> {
    let (kappa, long_run, sigma) = (rate.kappa, rate.long_run, &rate.sigma_r);
    let n = sigma.len();
    let dt = horizon / steps as f64;
    let sq = dt.sqrt();
    // loading of each independent normal on dr
    let load: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|i| sigma[i] * chol[(i, k)]).sum())
        .collect();
    let mut rng = rng(seed);
    (0..paths)
        .map(|_| {
            let mut r = rate.r0;
            let mut integral = 0.0;
            for _ in 0..steps {
                let mut shock = 0.0;
                for l in &load {
                    let z: f64 = rng.sample(StandardNormal);
                    shock += l * z;
                }
                let next = r + kappa * (long_run - r) * dt + shock * sq;
                integral += 0.5 * (r + next) * dt;
                r = next;
            }
            integral
        })
        .collect()
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Mean, variance and standard error of the sample variance (fourth
/// central moment based).
pub fn mean_var_se(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let (m, v) = mean_var(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m, v, (v / n).sqrt(), ((m4 - v * v) / n).sqrt())
}

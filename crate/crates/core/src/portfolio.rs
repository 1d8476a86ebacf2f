//! Moments of the gross-return vector under a Gaussian asset law and the
//! static mean-variance surplus problem
//!
//! ```text
//! min_θ E[(θᵀS - L - ζ)^2]   s.t.  1ᵀθ = x0,  E[θᵀS - L] ≥ ζ,  θ ∈ Θ.
//! ```
//!
//! Without box bounds the solution is the closed form
//! `θ(λ) = C̃ [C_SL + (ζ + λ) m_S] + C⁻¹1 x0 / (1ᵀC⁻¹1)` with
//! `C̃ = C⁻¹ - C⁻¹11ᵀC⁻¹ / (1ᵀC⁻¹1)`; with bounds a dense active-set QP is
//! solved instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::linalg;

/// Largest admissible condition number of `C_S`.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest log-coordinate that may be exponentiated.
const MAX_LOG: f64 = 700.0;

/// Raw moments of `S = (G_0, …, G_n)` and `L` under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBundle {
    /// `E[S]`.
    pub m_s: DVector<f64>,
    /// `E[S Sᵀ]`.
    pub c_s: DMatrix<f64>,
    /// `E[S L]`.
    pub c_sl: DVector<f64>,
    /// `E[L]`.
    pub m_l: f64,
    /// `E[L^2]`.
    pub m_l2: f64,
    /// Number of draws behind the estimate; 0 for exact moments.
    pub sample_count: usize,
}

impl MomentBundle {
    /// Number of assets including the bond.
    pub fn assets(&self) -> usize {
        self.m_s.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.assets();
        if d == 0 {
            return Err(Error::validation("m_S", "at least one asset is required"));
        }
        if self.c_s.nrows() != d || self.c_s.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "MomentBundle.C_S",
                expected: d,
                found: self.c_s.nrows(),
            });
        }
        if self.c_sl.len() != d {
            return Err(Error::DimensionMismatch {
                context: "MomentBundle.C_SL",
                expected: d,
                found: self.c_sl.len(),
            });
        }
        let finite = self
            .m_s
            .iter()
            .chain(self.c_s.iter())
            .chain(self.c_sl.iter())
            .all(|v| v.is_finite())
            && self.m_l.is_finite()
            && self.m_l2.is_finite();
        if !finite {
            return Err(Error::validation("moments", "non-finite entry"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetBounds {
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Surplus target and mean floor `ζ` (currency).
    pub zeta: f64,
    /// Initial wealth (currency).
    pub x0: f64,
    /// Per-asset currency bounds, bond first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_bounds: Option<Vec<AssetBounds>>,
}

impl ProblemSpec {
    pub fn new(zeta: f64, x0: f64) -> Self {
        Self {
            zeta,
            x0,
            theta_bounds: None,
        }
    }

    pub fn validate(&self, assets: Option<usize>) -> Result<()> {
        if !self.zeta.is_finite() {
            return Err(Error::validation("zeta", "must be finite"));
        }
        if !self.x0.is_finite() {
            return Err(Error::validation("x0", "must be finite"));
        }
        if let Some(bounds) = &self.theta_bounds {
            if let Some(d) = assets {
                if bounds.len() != d {
                    return Err(Error::validation(
                        "theta_bounds",
                        format!("expected {d} entries, found {}", bounds.len()),
                    ));
                }
            }
            for (i, b) in bounds.iter().enumerate() {
                let field = format!("theta_bounds[{i}]");
                if b.lower.is_some_and(|v| !v.is_finite())
                    || b.upper.is_some_and(|v| !v.is_finite())
                {
                    return Err(Error::validation(field, "bounds must be finite when given"));
                }
                if let (Some(lo), Some(hi)) = (b.lower, b.upper) {
                    if lo > hi {
                        return Err(Error::validation(
                            field,
                            format!("lower {lo} exceeds upper {hi}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ClosedForm,
    Qp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSolution {
    /// Currency amount per asset, bond first.
    pub theta: Vec<f64>,
    /// `100 θ / x0`.
    pub theta_pct: Vec<f64>,
    /// Multiplier of the mean floor in the `θ(λ)` parameterisation.
    pub lambda: f64,
    /// `(m_L + ζ(1 - m_Sᵀm_S) - m_Sᵀ(C̃C_SL + C⁻¹1 x0)) / m_Sᵀm_S`, an
    /// alternative active-case multiplier kept for comparison only.
    pub lambda_alt: Option<f64>,
    pub constraint_active: bool,
    pub expected_surplus: f64,
    pub surplus_std: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub expected_surplus: f64,
    pub surplus_std: f64,
    pub objective: f64,
}

fn checked_exp(x: f64, context: &'static str) -> Result<f64> {
    if x > MAX_LOG {
        return Err(Error::numerical(
            context,
            None,
            format!("exponent {x} exceeds {MAX_LOG}"),
        ));
    }
    Ok(x.exp())
}

fn check_asset_law(model: &GaussianModel) -> Result<usize> {
    if model.dim() < 2 {
        return Err(Error::validation(
            "model",
            format!(
                "asset law needs L plus at least the bond, got dimension {}",
                model.dim()
            ),
        ));
    }
    Ok(model.dim() - 1)
}

/// Exact lognormal moments of a Gaussian law over `(L, log G_0, …, log G_n)`.
pub fn moments_analytic(model: &GaussianModel) -> Result<MomentBundle> {
    let d = check_asset_law(model)?;
    let (mu, cov) = (model.mean(), model.cov());
    let m_l = mu[0];
    let mut m_s = DVector::zeros(d);
    for i in 0..d {
        m_s[i] = checked_exp(mu[1 + i] + 0.5 * cov[(1 + i, 1 + i)], "moments_analytic")?;
    }
    let mut c_s = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            // exp(Σ_ij) may overflow on its own even when the product does not
            let log = mu[1 + i]
                + mu[1 + j]
                + 0.5 * (cov[(1 + i, 1 + i)] + cov[(1 + j, 1 + j)])
                + cov[(1 + i, 1 + j)];
            checked_exp(log, "moments_analytic")?;
            let v = m_s[i] * m_s[j] * cov[(1 + i, 1 + j)].exp();
            c_s[(i, j)] = v;
            c_s[(j, i)] = v;
        }
    }
    let c_sl = DVector::from_fn(d, |i, _| (m_l + cov[(0, 1 + i)]) * m_s[i]);
    Ok(MomentBundle {
        m_s,
        c_s,
        c_sl,
        m_l,
        m_l2: cov[(0, 0)] + m_l * m_l,
        sample_count: 0,
    })
}

/// Sample moments from `count` draws of the model, seeded by `seed`.
pub fn moments_mc(model: &GaussianModel, count: usize, seed: u64) -> Result<MomentBundle> {
    let d = check_asset_law(model)?;
    if count < 1000 {
        return Err(Error::validation(
            "count",
            format!("need at least 1000 samples, got {count}"),
        ));
    }
    let draws = model.sample(count, seed)?;
    // accumulate deviations from the first draw: exact for degenerate laws
    // and free of the cancellation in raw second moments
    let l_ref = draws[(0, 0)];
    let s_ref = DVector::from_fn(d, |i, _| draws[(0, 1 + i)].exp());
    checked_exp(draws.row(0).columns(1, d).max(), "moments_mc")?;
    let mut ds_sum = DVector::zeros(d);
    let mut ds_ds = DMatrix::zeros(d, d);
    let mut ds_dl = DVector::zeros(d);
    let (mut dl_sum, mut dl_dl) = (0.0, 0.0);
    let mut ds = DVector::zeros(d);
    for r in 0..count {
        let dl = draws[(r, 0)] - l_ref;
        for i in 0..d {
            ds[i] = checked_exp(draws[(r, 1 + i)], "moments_mc")? - s_ref[i];
        }
        dl_sum += dl;
        dl_dl += dl * dl;
        ds_sum += &ds;
        ds_dl.axpy(dl, &ds, 1.0);
        ds_ds.ger(1.0, &ds, &ds, 1.0);
    }
    let k = 1.0 / count as f64;
    let (ds_mean, dl_mean) = (ds_sum * k, dl_sum * k);
    let cov_s = ds_ds * k - &ds_mean * ds_mean.transpose();
    let cov_sl = ds_dl * k - &ds_mean * dl_mean;
    let var_l = dl_dl * k - dl_mean * dl_mean;
    let m_s = s_ref + ds_mean;
    let m_l = l_ref + dl_mean;
    Ok(MomentBundle {
        c_s: linalg::symmetrize(&(cov_s + &m_s * m_s.transpose())),
        c_sl: cov_sl + &m_s * m_l,
        m_l2: var_l + m_l * m_l,
        m_s,
        m_l,
        sample_count: count,
    })
}

/// Expected surplus, surplus standard deviation and objective of `theta`.
pub fn evaluate_portfolio(
    theta: &DVector<f64>,
    moments: &MomentBundle,
    spec: &ProblemSpec,
) -> Result<Evaluation> {
    moments.validate()?;
    if theta.len() != moments.assets() {
        return Err(Error::DimensionMismatch {
            context: "evaluate_portfolio",
            expected: moments.assets(),
            found: theta.len(),
        });
    }
    let m = &moments.m_s;
    let es = theta.dot(m) - moments.m_l;
    // central moments keep deterministic laws exactly at zero variance
    let cov_s = &moments.c_s - m * m.transpose();
    let cov_sl = &moments.c_sl - m * moments.m_l;
    let var_l = moments.m_l2 - moments.m_l * moments.m_l;
    let var = (theta.dot(&(&cov_s * theta)) - 2.0 * theta.dot(&cov_sl) + var_l).max(0.0);
    let dev = es - spec.zeta;
    Ok(Evaluation {
        expected_surplus: es,
        surplus_std: var.sqrt(),
        objective: var + dev * dev,
    })
}

struct Factorised {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    inv_one: DVector<f64>,
    one_inv_one: f64,
}

impl Factorised {
    fn new(c_s: &DMatrix<f64>) -> Result<Self> {
        let eig = linalg::sym_eigen(c_s);
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 0.0) || max / min > MAX_CONDITION {
            return Err(Error::Solver(format!(
                "C_S is singular or ill-conditioned (eigenvalues in [{min:e}, {max:e}], limit {MAX_CONDITION:e})"
            )));
        }
        let chol = nalgebra::Cholesky::new(c_s.clone())
            .ok_or_else(|| Error::Solver("Cholesky factorisation of C_S failed".into()))?;
        let d = c_s.nrows();
        let inv_one = chol.solve(&DVector::from_element(d, 1.0));
        let one_inv_one = inv_one.sum();
        Ok(Self {
            chol,
            inv_one,
            one_inv_one,
        })
    }

    /// `C̃ v`.
    fn c_tilde(&self, v: &DVector<f64>) -> DVector<f64> {
        let inv_v = self.chol.solve(v);
        let t = inv_v.sum() / self.one_inv_one;
        inv_v - &self.inv_one * t
    }
}

fn theta_pct(theta: &DVector<f64>, x0: f64) -> Vec<f64> {
    theta.iter().map(|t| 100.0 * t / x0).collect()
}

/// Normalised KKT violation: stationarity (after eliminating the budget
/// multiplier), budget, mean floor, bound feasibility and complementary
/// slackness, each relative to the size of its terms.
fn kkt_residual(
    theta: &DVector<f64>,
    moments: &MomentBundle,
    spec: &ProblemSpec,
    lambda: f64,
    bound_mult: Option<(&DVector<f64>, &DVector<f64>)>,
) -> f64 {
    let d = theta.len();
    let c_theta = &moments.c_s * theta;
    let mut grad = (&c_theta - &moments.c_sl - &moments.m_s * (spec.zeta + lambda)) * 2.0;
    let mut scale = 2.0
        * (c_theta.norm() + moments.c_sl.norm() + (spec.zeta + lambda).abs() * moments.m_s.norm());
    if let Some((lo, hi)) = bound_mult {
        grad += hi - lo;
        scale += lo.norm() + hi.norm();
    }
    let shift = grad.sum() / d as f64;
    grad.add_scalar_mut(-shift);
    let stationarity = grad.norm() / scale.max(f64::MIN_POSITIVE);

    let budget = (theta.sum() - spec.x0).abs() / spec.x0.abs().max(1.0);
    let es = theta.dot(&moments.m_s) - moments.m_l;
    let es_scale = spec
        .zeta
        .abs()
        .max(moments.m_l.abs())
        .max(theta.abs().dot(&moments.m_s.abs()))
        .max(1.0);
    let floor = (spec.zeta - es).max(0.0) / es_scale;
    let slackness = if lambda > 0.0 {
        (es - spec.zeta).abs() / es_scale
    } else {
        0.0
    };
    let mut worst = stationarity
        .max(budget)
        .max(floor)
        .max(slackness)
        .max((-lambda).max(0.0));
    if let (Some(bounds), Some((lo, hi))) = (&spec.theta_bounds, bound_mult) {
        for (i, b) in bounds.iter().enumerate() {
            let t_scale = theta[i].abs().max(spec.x0.abs()).max(1.0);
            if let Some(l) = b.lower {
                worst = worst.max((l - theta[i]).max(0.0) / t_scale);
                if lo[i] > 0.0 {
                    worst = worst.max((theta[i] - l).abs() / t_scale);
                }
            }
            if let Some(u) = b.upper {
                worst = worst.max((theta[i] - u).max(0.0) / t_scale);
                if hi[i] > 0.0 {
                    worst = worst.max((u - theta[i]).abs() / t_scale);
                }
            }
        }
    }
    worst
}

/// Solves the static surplus problem for one moment bundle.
pub fn solve_portfolio(moments: &MomentBundle, spec: &ProblemSpec) -> Result<PortfolioSolution> {
    moments.validate()?;
    spec.validate(Some(moments.assets()))?;
    if spec.theta_bounds.is_some() {
        return solve_bounded(moments, spec);
    }
    let f = Factorised::new(&moments.c_s)?;
    let m = &moments.m_s;
    let base = &f.inv_one * (spec.x0 / f.one_inv_one);
    let theta_at = |lambda: f64| f.c_tilde(&(&moments.c_sl + m * (spec.zeta + lambda))) + &base;

    let theta0 = theta_at(0.0);
    let es0 = theta0.dot(m) - moments.m_l;
    let (theta, lambda, active, lambda_alt) = if es0 >= spec.zeta {
        (theta0, 0.0, false, None)
    } else {
        // es(λ) = es(0) + λ m_Sᵀ C̃ m_S
        let c_tilde_m = f.c_tilde(m);
        let slope = m.dot(&c_tilde_m);
        let reference = m.dot(&f.chol.solve(m));
        if !(slope > 1e-12 * reference) {
            return Err(Error::Infeasible {
                unconstrained_surplus: es0,
            });
        }
        let lambda = (spec.zeta - es0) / slope;
        let mm = m.dot(m);
        let printed = (moments.m_l + spec.zeta * (1.0 - mm)
            - m.dot(&(f.c_tilde(&moments.c_sl) + &f.inv_one * spec.x0)))
            / mm;
        let rel = (printed - lambda).abs() / lambda.abs().max(f64::MIN_POSITIVE);
        if rel > 1e-6 {
            log::debug!(
                "active-case multiplier: linear solve {lambda:e}, printed expression {printed:e}"
            );
        }
        (&theta0 + c_tilde_m * lambda, lambda, true, Some(printed))
    };
    let eval = evaluate_portfolio(&theta, moments, spec)?;
    Ok(PortfolioSolution {
        theta_pct: theta_pct(&theta, spec.x0),
        kkt_residual: kkt_residual(&theta, moments, spec, lambda, None),
        theta: theta.iter().copied().collect(),
        lambda,
        lambda_alt,
        constraint_active: active,
        expected_surplus: eval.expected_surplus,
        surplus_std: eval.surplus_std,
        objective: eval.objective,
        method: SolveMethod::ClosedForm,
    })
}

/// Box-bounded problem through a Goldfarb-Idnani dual active-set QP, in
/// variables `u = θ / s` to keep the data well scaled.
fn solve_bounded(moments: &MomentBundle, spec: &ProblemSpec) -> Result<PortfolioSolution> {
    let d = moments.assets();
    Factorised::new(&moments.c_s)?;
    let bounds = spec.theta_bounds.as_deref().unwrap_or(&[]);
    let s = spec
        .x0
        .abs()
        .max(moments.m_l.abs())
        .max(spec.zeta.abs())
        .max(1.0);

    let run =
        |with_floor: bool| -> Result<std::result::Result<quadprog::Solution, quadprog::Error>> {
            let mut q: Vec<f64> = (0..d * d)
                .map(|k| 2.0 * moments.c_s[(k / d, k % d)])
                .collect();
            let c: Vec<f64> = (0..d)
                .map(|i| -2.0 * (moments.c_sl[i] + spec.zeta * moments.m_s[i]) / s)
                .collect();
            let mut a = vec![1.0; d];
            let mut b = vec![spec.x0 / s];
            if with_floor {
                a.extend(moments.m_s.iter().map(|v| -v));
                b.push(-(spec.zeta + moments.m_l) / s);
            }
            for (i, bd) in bounds.iter().enumerate() {
                if let Some(lo) = bd.lower {
                    a.extend((0..d).map(|j| if j == i { -1.0 } else { 0.0 }));
                    b.push(-lo / s);
                }
                if let Some(hi) = bd.upper {
                    a.extend((0..d).map(|j| if j == i { 1.0 } else { 0.0 }));
                    b.push(hi / s);
                }
            }
            Ok(quadprog::solve_qp(&mut q, &c, &a, &b, 1, false))
        };

    let sol = match run(true)? {
        Ok(sol) => sol,
        Err(quadprog::Error::Infeasible) => {
            return match run(false)? {
                Ok(relaxed) => {
                    let theta = DVector::from_iterator(d, relaxed.sol.iter().map(|u| u * s));
                    Err(Error::Infeasible {
                        unconstrained_surplus: theta.dot(&moments.m_s) - moments.m_l,
                    })
                }
                Err(_) => Err(Error::validation(
                    "theta_bounds",
                    "no allocation satisfies the budget within the bounds",
                )),
            };
        }
        Err(e) => return Err(Error::Solver(format!("QP solve failed: {e:?}"))),
    };

    let theta = DVector::from_iterator(d, sol.sol.iter().map(|u| u * s));
    let lambda = 0.5 * s * sol.lagr[1];
    let mut lo = DVector::zeros(d);
    let mut hi = DVector::zeros(d);
    let mut k = 2;
    for (i, bd) in bounds.iter().enumerate() {
        if bd.lower.is_some() {
            lo[i] = s * sol.lagr[k];
            k += 1;
        }
        if bd.upper.is_some() {
            hi[i] = s * sol.lagr[k];
            k += 1;
        }
    }
    let eval = evaluate_portfolio(&theta, moments, spec)?;
    Ok(PortfolioSolution {
        theta_pct: theta_pct(&theta, spec.x0),
        kkt_residual: kkt_residual(&theta, moments, spec, lambda, Some((&lo, &hi))),
        theta: theta.iter().copied().collect(),
        lambda,
        lambda_alt: None,
        constraint_active: lambda > 0.0,
        expected_surplus: eval.expected_surplus,
        surplus_std: eval.surplus_std,
        objective: eval.objective,
        method: SolveMethod::Qp,
    })
}

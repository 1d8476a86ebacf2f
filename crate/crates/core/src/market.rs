//! Market parameters and the Gaussian laws they induce at the horizon.
//!
//! The market has an Ornstein-Uhlenbeck short rate, `n` GBM stocks driven by
//! `n` correlated financial factors `W`, and a Brownian liability driven by
//! `W` and `m` correlated insurance factors `B`. With `C_Z =
//! blockdiag(rho_W, rho_B)`, padded loadings `σ̃_r = (σ_r, 0_m)`,
//! `σ̃_i = (σ_i, 0_m)` and `b = (β, γ)`, the horizon law of
//! `(L_T, r_T, log S_1, …, log S_n)` is Gaussian; [`build_joint_law`]
//! assembles it and [`build_asset_law`] derives the law of liability plus log
//! gross returns that the portfolio problem consumes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    /// Initial short rate (1/yr).
    pub r0: f64,
    /// Long-run rate level (1/yr).
    #[serde(rename = "R0")]
    pub long_run: f64,
    /// Mean-reversion speed (1/yr).
    pub kappa: f64,
    /// Loadings on the financial factors, length `n`.
    pub sigma_r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StockParams {
    /// Initial prices (currency).
    pub s0: Vec<f64>,
    /// Drifts (1/yr).
    pub mu: Vec<f64>,
    /// Volatility matrix; row `i` is the factor loading vector of stock `i`.
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiabilityParams {
    /// Initial liability (currency).
    pub l0: f64,
    /// Drift (currency/yr).
    pub alpha: f64,
    /// Loadings on the financial factors `W`, length `n`.
    pub beta: Vec<f64>,
    /// Loadings on the insurance factors `B`, length `m`.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlations {
    #[serde(rename = "rho_W")]
    pub rho_w: Vec<Vec<f64>>,
    #[serde(rename = "rho_B")]
    pub rho_b: Vec<Vec<f64>>,
}

/// Parameter blocks of the market plus horizon. Rates are per year; money
/// amounts share one (unspecified) currency unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub rate: RateParams,
    pub stocks: StockParams,
    pub liability: LiabilityParams,
    /// Identity correlations when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Correlations>,
    /// Horizon `T` in years.
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    /// Optional declared number of stocks; checked against the vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Optional declared number of insurance factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondMode {
    /// Exact Gaussian law of `∫_0^T r(s) ds`.
    #[default]
    IntegratedOuExact,
    /// `log G_0 = T · r_T`, using the short-rate row of the joint law.
    ShortRateProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssetLawConfig {
    pub bond_mode: BondMode,
    /// Express assets as gross returns `S_i(T)/S_i(0)` (unit initial price),
    /// so portfolio weights are currency amounts with budget `1ᵀθ = x0`.
    pub normalize_to_gross_returns: bool,
    /// Subtract `½ σ̃_iᵀ C_Z σ̃_i T` from the log-stock drift.
    pub ito_correction: bool,
}

impl Default for AssetLawConfig {
    fn default() -> Self {
        Self {
            bond_mode: BondMode::IntegratedOuExact,
            normalize_to_gross_returns: true,
            ito_correction: false,
        }
    }
}

fn check_len(field: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::validation(
            field,
            format!("expected length {want}, found {got}"),
        ));
    }
    Ok(())
}

fn check_finite(field: &str, xs: &[f64]) -> Result<()> {
    if let Some(v) = xs.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(field, format!("non-finite value {v}")));
    }
    Ok(())
}

fn to_matrix(rows: &[Vec<f64>], n: usize, field: &str) -> Result<DMatrix<f64>> {
    check_len(field, rows.len(), n)?;
    for (i, r) in rows.iter().enumerate() {
        check_len(&format!("{field}[{i}]"), r.len(), n)?;
        check_finite(&format!("{field}[{i}]"), r)?;
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn check_correlation(m: &DMatrix<f64>, field: &str) -> Result<()> {
    linalg::ensure_symmetric(m, field)?;
    for i in 0..m.nrows() {
        if (m[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::validation(
                field,
                format!("diagonal entry {i} is {} (must be 1)", m[(i, i)]),
            ));
        }
    }
    if let Some(v) = m.iter().find(|v| v.abs() > 1.0 + 1e-12) {
        return Err(Error::validation(
            field,
            format!("entry {v} outside [-1, 1]"),
        ));
    }
    linalg::ensure_psd(m, field)
}

impl MarketParams {
    /// Number of stocks.
    pub fn n(&self) -> usize {
        self.stocks.mu.len()
    }

    /// Number of insurance factors.
    pub fn m(&self) -> usize {
        self.liability.gamma.len()
    }

    /// Two stocks, two financial and two insurance factors, `T = 1`,
    /// identity correlations. This is the default "true" market of the
    /// experiment harness.
    pub fn benchmark() -> Self {
        Self {
            rate: RateParams {
                r0: 0.02,
                long_run: 0.02,
                kappa: 0.60,
                sigma_r: vec![0.005, 0.005],
            },
            stocks: StockParams {
                s0: vec![50.0, 50.0],
                mu: vec![0.05, 0.10],
                sigma: vec![vec![0.02, 0.02], vec![0.05, 0.05]],
            },
            liability: LiabilityParams {
                l0: 0.0,
                alpha: 1_000_000.0,
                beta: vec![0.0, 0.0],
                gamma: vec![80_000.0, 80_000.0],
            },
            correlations: None,
            horizon: 1.0,
            n: None,
            m: None,
        }
    }

    pub fn rho_w(&self) -> Result<DMatrix<f64>> {
        match &self.correlations {
            Some(c) => to_matrix(&c.rho_w, self.n(), "correlations.rho_W"),
            None => Ok(linalg::identity(self.n())),
        }
    }

    pub fn rho_b(&self) -> Result<DMatrix<f64>> {
        match &self.correlations {
            Some(c) => to_matrix(&c.rho_b, self.m(), "correlations.rho_B"),
            None => Ok(linalg::identity(self.m())),
        }
    }

    /// Shapes, finiteness and scalar ranges; no matrix definiteness checks.
    fn validate_structure(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if let Some(decl) = self.n {
            check_len("n", n, decl)?;
        }
        if let Some(decl) = self.m {
            check_len("m", m, decl)?;
        }
        let r = &self.rate;
        check_finite("rate", &[r.r0, r.long_run, r.kappa])?;
        if !(r.kappa > 0.0) {
            return Err(Error::validation(
                "rate.kappa",
                format!("must be positive, got {}", r.kappa),
            ));
        }
        check_len("rate.sigma_r", r.sigma_r.len(), n)?;
        check_finite("rate.sigma_r", &r.sigma_r)?;

        let s = &self.stocks;
        check_len("stocks.s0", s.s0.len(), n)?;
        check_finite("stocks.s0", &s.s0)?;
        if let Some((i, v)) = s.s0.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::validation(
                format!("stocks.s0[{i}]"),
                format!("must be positive, got {v}"),
            ));
        }
        check_finite("stocks.mu", &s.mu)?;
        to_matrix(&s.sigma, n, "stocks.sigma")?;

        let l = &self.liability;
        check_finite("liability", &[l.l0, l.alpha])?;
        check_len("liability.beta", l.beta.len(), n)?;
        check_finite("liability.beta", &l.beta)?;
        check_finite("liability.gamma", &l.gamma)?;

        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::validation(
                "horizon_T",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        self.rho_w()?;
        self.rho_b()?;
        Ok(())
    }

    /// Checks every invariant, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        check_correlation(&self.rho_w()?, "correlations.rho_W")?;
        check_correlation(&self.rho_b()?, "correlations.rho_B")?;
        Ok(())
    }

    /// Horizon factor loadings, padded to the `n + m` factor space.
    fn loadings(&self) -> Loadings {
        let (n, m) = (self.n(), self.m());
        let pad = |v: &[f64]| {
            let mut out = DVector::zeros(n + m);
            out.rows_mut(0, n).copy_from_slice(v);
            out
        };
        let mut b = DVector::zeros(n + m);
        b.rows_mut(0, n).copy_from_slice(&self.liability.beta);
        b.rows_mut(n, m).copy_from_slice(&self.liability.gamma);
        Loadings {
            b,
            rate: pad(&self.rate.sigma_r),
            stocks: self.stocks.sigma.iter().map(|row| pad(row)).collect(),
        }
    }

    fn factor_correlation(&self) -> Result<DMatrix<f64>> {
        let (n, m) = (self.n(), self.m());
        let rho_w = self.rho_w()?;
        let rho_b = self.rho_b()?;
        for (block, rho) in [
            ("correlations.rho_W", &rho_w),
            ("correlations.rho_B", &rho_b),
        ] {
            if let Err(Error::Validation { reason, .. }) = check_correlation(rho, block) {
                return Err(Error::Model {
                    block: block.to_string(),
                    detail: reason,
                });
            }
        }
        let mut cz = DMatrix::zeros(n + m, n + m);
        cz.view_mut((0, 0), (n, n)).copy_from(&rho_w);
        cz.view_mut((n, n), (m, m)).copy_from(&rho_b);
        Ok(cz)
    }
}

struct Loadings {
    b: DVector<f64>,
    rate: DVector<f64>,
    stocks: Vec<DVector<f64>>,
}

/// `(c(t), c̃(t))` with `c(t) = sqrt(t (1 - e^{-2κt}) / 2κ)` and
/// `c̃(t) = c(t)^2 / t`.
pub fn time_factors(kappa: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::validation("t", format!("must be positive, got {t}")));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::validation(
            "kappa",
            format!("must be positive, got {kappa}"),
        ));
    }
    let c_tilde = -(-2.0 * kappa * t).exp_m1() / (2.0 * kappa);
    Ok(((t * c_tilde).sqrt(), c_tilde))
}

/// `(1 - e^{-κT}) / κ`, the weight of `r0 - R0` in `∫ r`.
fn ou_decay_integral(kappa: f64, t: f64) -> f64 {
    -(-kappa * t).exp_m1() / kappa
}

/// Coefficients of the integrated OU noise `∫_0^T g(s) σ_rᵀ dW(s)` with
/// `g(s) = (1 - e^{-κ(T-s)})/κ`: returns `(∫ g ds, ∫ g^2 ds)`.
fn integrated_ou_moments(kappa: f64, t: f64) -> (f64, f64) {
    let x = kappa * t;
    if x < 0.1 {
        // alternating series in x; both leading terms cancel analytically
        let (mut first, mut second) = (0.0, 0.0);
        let mut term = x; // x^k / k! at k = 1
        for k in 2..=24 {
            term *= x / k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            first += sign * term;
            if k >= 3 {
                second -= sign * term * (2f64.powi(k - 1) - 2.0);
            }
        }
        (first / (kappa * kappa), second / kappa.powi(3))
    } else {
        let a1 = ou_decay_integral(kappa, t);
        let a2 = -(-2.0 * kappa * t).exp_m1() / (2.0 * kappa);
        ((t - a1) / kappa, (t - 2.0 * a1 + a2) / (kappa * kappa))
    }
}

fn assemble(mean: DVector<f64>, cov_of: impl Fn(usize, usize) -> f64) -> Result<GaussianModel> {
    let d = mean.len();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = cov_of(i, j);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    match GaussianModel::new(mean, cov) {
        Ok(m) => Ok(m),
        Err(Error::Validation { reason, .. }) => Err(Error::Model {
            block: "C_t".to_string(),
            detail: reason,
        }),
        Err(e) => Err(e),
    }
}

/// Joint law of `(L_T, r_T, log S_1(T), …, log S_n(T))`, dimension `n + 2`.
pub fn build_joint_law(params: &MarketParams) -> Result<GaussianModel> {
    params.validate_structure()?;
    let cz = params.factor_correlation()?;
    let t = params.horizon;
    let (c, c_tilde) = time_factors(params.rate.kappa, t)?;
    let ld = params.loadings();
    let n = params.n();

    let r = &params.rate;
    let mut mean = DVector::zeros(n + 2);
    mean[0] = params.liability.l0 + params.liability.alpha * t;
    mean[1] = r.long_run + (-r.kappa * t).exp() * (r.r0 - r.long_run);
    for i in 0..n {
        mean[2 + i] = params.stocks.s0[i].ln() + params.stocks.mu[i] * t;
    }

    // row vectors and their time scale: L ~ sqrt(t), r ~ sqrt(c̃), S ~ sqrt(t)
    let vec_of = |i: usize| match i {
        0 => &ld.b,
        1 => &ld.rate,
        k => &ld.stocks[k - 2],
    };
    let scale = |i: usize, j: usize| match (i == 1, j == 1) {
        (true, true) => c_tilde,
        (true, false) | (false, true) => c,
        (false, false) => t,
    };
    assemble(mean, |i, j| scale(i, j) * vec_of(i).dot(&(&cz * vec_of(j))))
}

/// Joint law of `(L_T, log G_0, log G_1, …, log G_n)` where `G_0` is the bond
/// gross return and `G_i = S_i(T)/S_i(0)`.
///
/// With `normalize_to_gross_returns = false` the stock coordinates are
/// `log S_i(T)` instead (the bond has unit initial price either way).
pub fn build_asset_law(params: &MarketParams, config: &AssetLawConfig) -> Result<GaussianModel> {
    params.validate_structure()?;
    let cz = params.factor_correlation()?;
    let t = params.horizon;
    let r = &params.rate;
    let (c, c_tilde) = time_factors(r.kappa, t)?;
    let ld = params.loadings();
    let n = params.n();
    let q = |u: &DVector<f64>, v: &DVector<f64>| u.dot(&(&cz * v));

    let mut mean = DVector::zeros(n + 2);
    mean[0] = params.liability.l0 + params.liability.alpha * t;

    // bond: scalar weight of the rate noise against L / stocks, and own variance
    let (bond_cross, bond_var) = match config.bond_mode {
        BondMode::IntegratedOuExact => {
            mean[1] = r.long_run * t + (r.r0 - r.long_run) * ou_decay_integral(r.kappa, t);
            integrated_ou_moments(r.kappa, t)
        }
        BondMode::ShortRateProxy => {
            mean[1] = t * (r.long_run + (-r.kappa * t).exp() * (r.r0 - r.long_run));
            (t * c, t * t * c_tilde)
        }
    };

    for i in 0..n {
        let s = &ld.stocks[i];
        let mut m = params.stocks.mu[i] * t;
        if config.ito_correction {
            m -= 0.5 * q(s, s) * t;
        }
        if !config.normalize_to_gross_returns {
            m += params.stocks.s0[i].ln();
        }
        mean[2 + i] = m;
    }

    assemble(mean, |i, j| match (i, j) {
        (0, 0) => t * q(&ld.b, &ld.b),
        (0, 1) => bond_cross * q(&ld.b, &ld.rate),
        (1, 1) => bond_var * q(&ld.rate, &ld.rate),
        (0, k) => t * q(&ld.b, &ld.stocks[k - 2]),
        (1, k) => bond_cross * q(&ld.rate, &ld.stocks[k - 2]),
        (a, b) => t * q(&ld.stocks[a - 2], &ld.stocks[b - 2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn time_factor_limits_and_identity() {
        let (c, ct) = time_factors(0.6, 1e-8).unwrap();
        assert!(c.abs() < 1e-4);
        assert_relative_eq!(ct * 1e-8, c * c, max_relative = 1e-12);

        let (c, ct) = time_factors(0.6, 1.0).unwrap();
        let direct = ((1.0 - (-1.2f64).exp()) / 1.2).sqrt();
        assert_relative_eq!(c, direct, max_relative = 1e-14);
        assert_relative_eq!(ct, c * c, max_relative = 1e-14);

        assert!(time_factors(0.6, 0.0).is_err());
        assert!(time_factors(0.6, -1.0).is_err());
        assert!(time_factors(0.0, 1.0).is_err());
    }

    #[test]
    fn integrated_ou_series_matches_closed_form_at_switch() {
        for &(k, t) in &[(0.6, 0.1666), (0.6, 0.1667), (0.05, 1.99), (0.05, 2.01)] {
            let x: f64 = k * t;
            let a1 = -(-x).exp_m1() / k;
            let a2 = -(-2.0 * x).exp_m1() / (2.0 * k);
            let direct = ((t - a1) / k, (t - 2.0 * a1 + a2) / (k * k));
            let got = integrated_ou_moments(k, t);
            assert_relative_eq!(got.0, direct.0, max_relative = 1e-9);
            assert_relative_eq!(got.1, direct.1, max_relative = 1e-6);
        }
        // tiny kappa: ∫ g ≈ T^2/2, ∫ g^2 ≈ T^3/3
        let (f, s) = integrated_ou_moments(1e-9, 2.0);
        assert_relative_eq!(f, 2.0, max_relative = 1e-8);
        assert_relative_eq!(s, 8.0 / 3.0, max_relative = 1e-8);
    }

    #[test]
    fn benchmark_joint_law_means() {
        let law = build_joint_law(&MarketParams::benchmark()).unwrap();
        assert_eq!(law.dim(), 4);
        assert_relative_eq!(law.mean()[0], 1_000_000.0, epsilon = 0.0);
        assert_relative_eq!(law.mean()[1], 0.02, epsilon = 1e-17);
        assert_relative_eq!(law.mean()[2], 50f64.ln() + 0.05, epsilon = 1e-15);
    }

    #[test]
    fn zero_beta_decouples_liability() {
        let law = build_joint_law(&MarketParams::benchmark()).unwrap();
        for j in 1..4 {
            assert_eq!(law.cov()[(0, j)], 0.0);
        }
        // T γᵀ ρ_B γ with identity ρ_B
        assert_relative_eq!(
            law.cov()[(0, 0)],
            2.0 * 80_000f64.powi(2),
            max_relative = 1e-15
        );
    }

    #[test]
    fn zero_volatility_gives_deterministic_law() {
        let mut p = MarketParams::benchmark();
        p.rate.sigma_r = vec![0.0; 2];
        p.stocks.sigma = vec![vec![0.0; 2]; 2];
        p.liability.gamma = vec![0.0; 2];
        let law = build_joint_law(&p).unwrap();
        assert!(law.cov().iter().all(|v| *v == 0.0));
        let assets = build_asset_law(&p, &AssetLawConfig::default()).unwrap();
        assert!(assets.cov().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn asset_law_bond_without_rate_noise() {
        let mut p = MarketParams::benchmark();
        p.rate.sigma_r = vec![0.0; 2];
        p.rate.r0 = 0.03;
        let exact = build_asset_law(&p, &AssetLawConfig::default()).unwrap();
        let expected = 0.02 + 0.01 * (1.0 - (-0.6f64).exp()) / 0.6;
        assert_relative_eq!(exact.mean()[1], expected, max_relative = 1e-14);
        assert_eq!(exact.cov()[(1, 1)], 0.0);

        p.rate.r0 = 0.02;
        let cfg = AssetLawConfig {
            bond_mode: BondMode::ShortRateProxy,
            ..Default::default()
        };
        let proxy = build_asset_law(&p, &cfg).unwrap();
        let exact = build_asset_law(&p, &AssetLawConfig::default()).unwrap();
        assert_relative_eq!(proxy.mean()[1], exact.mean()[1], max_relative = 1e-15);
    }

    #[test]
    fn asset_law_liability_marginal_matches_joint_law() {
        let mut p = MarketParams::benchmark();
        p.liability.beta = vec![1000.0, -500.0];
        let joint = build_joint_law(&p).unwrap();
        for mode in [BondMode::IntegratedOuExact, BondMode::ShortRateProxy] {
            let cfg = AssetLawConfig {
                bond_mode: mode,
                ..Default::default()
            };
            let assets = build_asset_law(&p, &cfg).unwrap();
            assert_eq!(assets.mean()[0], joint.mean()[0]);
            assert_eq!(assets.cov()[(0, 0)], joint.cov()[(0, 0)]);
            // stock-liability covariance is T σ̃_iᵀ C_Z b
            for i in 0..2 {
                assert_eq!(assets.cov()[(0, 2 + i)], joint.cov()[(0, 2 + i)]);
                let sig = &p.stocks.sigma[i];
                let expected = sig[0] * 1000.0 + sig[1] * -500.0;
                assert_relative_eq!(assets.cov()[(0, 2 + i)], expected, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn gross_returns_ignore_initial_prices() {
        let mut p = MarketParams::benchmark();
        let a = build_asset_law(&p, &AssetLawConfig::default()).unwrap();
        p.stocks.s0 = vec![3.0, 700.0];
        let b = build_asset_law(&p, &AssetLawConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ito_correction_lowers_log_drift() {
        let p = MarketParams::benchmark();
        let plain = build_asset_law(&p, &AssetLawConfig::default()).unwrap();
        let cfg = AssetLawConfig {
            ito_correction: true,
            ..Default::default()
        };
        let ito = build_asset_law(&p, &cfg).unwrap();
        assert_relative_eq!(
            plain.mean()[3] - ito.mean()[3],
            0.5 * 2.0 * 0.05f64.powi(2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn validation_names_fields() {
        let mut p = MarketParams::benchmark();
        p.rate.kappa = -1.0;
        let e = p.validate().unwrap_err();
        assert!(
            matches!(e, Error::Validation { ref field, .. } if field == "rate.kappa"),
            "{e}"
        );

        let mut p = MarketParams::benchmark();
        p.stocks.s0[1] = 0.0;
        assert!(
            matches!(p.validate(), Err(Error::Validation { field, .. }) if field == "stocks.s0[1]")
        );

        let mut p = MarketParams::benchmark();
        p.liability.beta.pop();
        assert!(p.validate().is_err());

        let mut p = MarketParams::benchmark();
        p.n = Some(3);
        assert!(p.validate().is_err());
    }

    #[test]
    fn indefinite_correlation_is_a_model_error() {
        let mut p = MarketParams::benchmark();
        p.correlations = Some(Correlations {
            rho_w: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
            rho_b: vec![vec![1.0, 1.0 + 1e-3], vec![1.0 + 1e-3, 1.0]],
        });
        assert!(
            matches!(p.validate(), Err(Error::Validation { field, .. }) if field == "correlations.rho_B")
        );
        match build_joint_law(&p) {
            Err(Error::Model { block, .. }) => assert_eq!(block, "correlations.rho_B"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let p = MarketParams::benchmark();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"R0\"") && s.contains("\"horizon_T\""));
        let back: MarketParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}

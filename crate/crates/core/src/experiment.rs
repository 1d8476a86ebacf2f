//! Replication harness: for each (homogeneity, N) cell, repeat K times
//! {perturb → prior set → barycenter → moments → portfolio}, then aggregate.
//!
//! Replication `r` of a cell draws from streams addressed by
//! `(rng_seed, preset, N, r)`, and results are reduced in replica order, so
//! summaries do not depend on thread count or scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barycenter::{barycenter, BarycenterOptions};
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::market::{build_asset_law, AssetLawConfig, BondMode, Correlations, MarketParams};
use crate::portfolio::{
    moments_analytic, moments_mc, solve_portfolio, PortfolioSolution, ProblemSpec,
};
use crate::priors::{perturb, to_prior_set, Homogeneity, PerturbationSpec};
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;
/// Largest tolerated fraction of failed replications per cell.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsRule {
    #[default]
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentEstimator {
    /// Sample moments from `mc_samples` draws of the aggregate law.
    #[default]
    Mc,
    /// Exact lognormal moments.
    Analytic,
}

fn default_presets() -> Vec<Homogeneity> {
    vec![Homogeneity::High, Homogeneity::Medium, Homogeneity::Low]
}

fn default_prior_counts() -> Vec<usize> {
    vec![1, 2, 3, 5, 10, 30]
}

fn default_replications() -> usize {
    200
}

fn default_mc_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub true_params: MarketParams,
    #[serde(alias = "spec")]
    pub problem: ProblemSpec,
    /// Bounds for the `custom` preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default = "default_presets")]
    pub presets: Vec<Homogeneity>,
    #[serde(default = "default_prior_counts")]
    pub prior_counts: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub weights_rule: WeightsRule,
    #[serde(default)]
    pub asset_law: AssetLawConfig,
    #[serde(default)]
    pub moment_estimator: MomentEstimator,
    #[serde(default)]
    pub barycenter: BarycenterOptions,
}

impl ExperimentConfig {
    /// Benchmark market, ζ = 0, x0 = 1e6, all three presets at desk scale.
    pub fn desk_default(rng_seed: u64) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            true_params: MarketParams::benchmark(),
            problem: ProblemSpec::new(0.0, 1_000_000.0),
            perturbation: None,
            presets: default_presets(),
            prior_counts: default_prior_counts(),
            replications: default_replications(),
            mc_samples: default_mc_samples(),
            rng_seed,
            weights_rule: WeightsRule::Equal,
            asset_law: AssetLawConfig::default(),
            moment_estimator: MomentEstimator::Mc,
            barycenter: BarycenterOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema",
                format!(
                    "unsupported schema {}, expected {SCHEMA_VERSION}",
                    self.schema
                ),
            ));
        }
        self.true_params.validate()?;
        self.problem.validate(Some(self.true_params.n() + 1))?;
        if self.replications < 1 {
            return Err(Error::validation("replications", "must be at least 1"));
        }
        if self.mc_samples < 1000 {
            return Err(Error::validation("mc_samples", "must be at least 1000"));
        }
        if self.prior_counts.is_empty() {
            return Err(Error::validation("prior_counts", "must not be empty"));
        }
        if self.prior_counts.contains(&0) {
            return Err(Error::validation(
                "prior_counts",
                "prior counts must be positive",
            ));
        }
        if self.presets.is_empty() {
            return Err(Error::validation("presets", "must not be empty"));
        }
        for &p in &self.presets {
            self.perturbation_for(p)?.resolve()?;
        }
        Ok(())
    }

    pub fn perturbation_for(&self, preset: Homogeneity) -> Result<PerturbationSpec> {
        match preset {
            Homogeneity::Custom => match &self.perturbation {
                Some(p) if p.preset == Homogeneity::Custom => Ok(p.clone()),
                _ => Err(Error::validation(
                    "perturbation",
                    "preset `custom` needs a perturbation block with preset `custom`",
                )),
            },
            level => Ok(PerturbationSpec::preset(level)),
        }
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Aggregates of one table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    /// `None` for the true-model row.
    pub homogeneity: Option<Homogeneity>,
    /// 0 for the true-model row.
    pub n_priors: usize,
    pub replications: usize,
    pub failures: usize,
    pub mean_allocation_pct: Vec<f64>,
    pub se_allocation_pct: Vec<f64>,
    pub mean_expected_surplus: f64,
    /// Sample standard deviation over replications divided by `sqrt(K)`.
    pub se_expected_surplus: f64,
    /// Root mean squared deviation from the true-model value.
    pub rmse_expected_surplus: f64,
    pub mean_surplus_std: f64,
    pub se_surplus_std: f64,
    pub rmse_surplus_std: f64,
    /// 2.5% and 97.5% percentiles of the expected surplus.
    pub surplus_ci: (f64, f64),
    pub mean_variance_ratio: f64,
    /// 2.5% and 97.5% percentiles of estimated / true surplus variance.
    pub variance_ratio_ci: (f64, f64),
}

impl CellSummary {
    pub fn label(&self) -> String {
        match self.homogeneity {
            Some(h) => format!("{}/N={}", h.as_str(), self.n_priors),
            None => "true".to_string(),
        }
    }
}

/// Portfolio of the true law with exact moments: the reference for
/// deviations and the variance-ratio denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueReference {
    pub solution: PortfolioSolution,
    pub surplus_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub rng_seed: u64,
    pub reference: TrueReference,
    pub true_row: CellSummary,
    pub cells: Vec<CellSummary>,
}

impl ExperimentReport {
    /// True-model row first, then cells in run order.
    pub fn summaries(&self) -> Vec<&CellSummary> {
        std::iter::once(&self.true_row).chain(&self.cells).collect()
    }

    pub fn total_failures(&self) -> usize {
        self.summaries().iter().map(|s| s.failures).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Replica {
    allocation_pct: Vec<f64>,
    expected_surplus: f64,
    surplus_std: f64,
    variance_ratio: f64,
}

pub fn true_reference(config: &ExperimentConfig) -> Result<TrueReference> {
    let law = build_asset_law(&config.true_params, &config.asset_law)?;
    let solution = solve_portfolio(&moments_analytic(&law)?, &config.problem)?;
    let surplus_variance = solution.surplus_std.powi(2);
    if !(surplus_variance > 0.0) {
        return Err(Error::validation(
            "true_params",
            "true-model surplus variance is zero, so variance ratios are undefined",
        ));
    }
    Ok(TrueReference {
        solution,
        surplus_variance,
    })
}

fn preset_code(h: Option<Homogeneity>) -> u64 {
    match h {
        None => 0,
        Some(Homogeneity::High) => 1,
        Some(Homogeneity::Medium) => 2,
        Some(Homogeneity::Low) => 3,
        Some(Homogeneity::Custom) => 4,
    }
}

fn solve_on(
    law: &GaussianModel,
    config: &ExperimentConfig,
    seed: u64,
    reference: &TrueReference,
) -> Result<Replica> {
    let moments = match config.moment_estimator {
        MomentEstimator::Mc => moments_mc(law, config.mc_samples, seed)?,
        MomentEstimator::Analytic => moments_analytic(law)?,
    };
    let sol = solve_portfolio(&moments, &config.problem)?;
    Ok(Replica {
        allocation_pct: sol.theta_pct,
        expected_surplus: sol.expected_surplus,
        surplus_std: sol.surplus_std,
        variance_ratio: sol.surplus_std.powi(2) / reference.surplus_variance,
    })
}

fn run_replica(
    config: &ExperimentConfig,
    spec: &PerturbationSpec,
    preset: Homogeneity,
    n_priors: usize,
    index: usize,
    reference: &TrueReference,
) -> Result<Replica> {
    let path = [preset_code(Some(preset)), n_priors as u64, index as u64];
    let base = rng::derive_seed(config.rng_seed, &path);
    let params = perturb(
        &config.true_params,
        spec,
        n_priors,
        rng::derive_seed(base, &[rng::tag::PERTURB]),
    )?;
    let set = to_prior_set(&params, None, &config.asset_law)?;
    let bary = barycenter(&set, config.barycenter)?;
    if !bary.converged {
        return Err(Error::numerical(
            "barycenter",
            Some(bary.iterations),
            format!("no convergence, last change {:e}", bary.final_change),
        ));
    }
    solve_on(
        &bary.model,
        config,
        rng::derive_seed(base, &[rng::tag::SAMPLE]),
        reference,
    )
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (mut s, mut k) = (0.0, 0);
    for x in xs {
        s += x;
        k += 1;
    }
    (s / k as f64, k)
}

/// Sample standard deviation divided by `sqrt(k)`; 0 for a single value.
fn standard_error(xs: &[f64]) -> f64 {
    let k = xs.len();
    if k < 2 {
        return 0.0;
    }
    let (m, _) = mean(xs.iter().copied());
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (k - 1) as f64).sqrt() / (k as f64).sqrt()
}

fn rmse(xs: &[f64], target: f64) -> f64 {
    (xs.iter().map(|x| (x - target).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `p (k - 1)` in the sorted sample).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let k = sorted.len();
    if k == 1 {
        return sorted[0];
    }
    let pos = p * (k - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(k - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(xs: &[f64]) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    (percentile(&v, 0.025), percentile(&v, 0.975))
}

fn summarise(
    homogeneity: Option<Homogeneity>,
    n_priors: usize,
    outcomes: Vec<Result<Replica>>,
    reference: &TrueReference,
) -> Result<CellSummary> {
    let total = outcomes.len();
    let mut ok = Vec::with_capacity(total);
    let mut failures = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => ok.push(r),
            Err(e) => {
                failures += 1;
                log::warn!("replication {i} failed: {e}");
            }
        }
    }
    let cell = CellSummary {
        homogeneity,
        n_priors,
        replications: total,
        failures,
        mean_allocation_pct: vec![],
        se_allocation_pct: vec![],
        mean_expected_surplus: f64::NAN,
        se_expected_surplus: f64::NAN,
        rmse_expected_surplus: f64::NAN,
        mean_surplus_std: f64::NAN,
        se_surplus_std: f64::NAN,
        rmse_surplus_std: f64::NAN,
        surplus_ci: (f64::NAN, f64::NAN),
        mean_variance_ratio: f64::NAN,
        variance_ratio_ci: (f64::NAN, f64::NAN),
    };
    if ok.is_empty() || failures as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::Experiment {
            cell: cell.label(),
            failures,
            replications: total,
        });
    }
    let assets = ok[0].allocation_pct.len();
    let column = |f: &dyn Fn(&Replica) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
    let es = column(&|r| r.expected_surplus);
    let sd = column(&|r| r.surplus_std);
    let vr = column(&|r| r.variance_ratio);
    let alloc: Vec<Vec<f64>> = (0..assets)
        .map(|a| column(&|r| r.allocation_pct[a]))
        .collect();
    Ok(CellSummary {
        mean_allocation_pct: alloc.iter().map(|c| mean(c.iter().copied()).0).collect(),
        se_allocation_pct: alloc.iter().map(|c| standard_error(c)).collect(),
        mean_expected_surplus: mean(es.iter().copied()).0,
        se_expected_surplus: standard_error(&es),
        rmse_expected_surplus: rmse(&es, reference.solution.expected_surplus),
        mean_surplus_std: mean(sd.iter().copied()).0,
        se_surplus_std: standard_error(&sd),
        rmse_surplus_std: rmse(&sd, reference.solution.surplus_std),
        surplus_ci: interval(&es),
        mean_variance_ratio: mean(vr.iter().copied()).0,
        variance_ratio_ci: interval(&vr),
        ..cell
    })
}

/// K replications of one (preset, N) cell.
pub fn run_cell(
    config: &ExperimentConfig,
    reference: &TrueReference,
    n_priors: usize,
    preset: Homogeneity,
) -> Result<CellSummary> {
    let spec = config.perturbation_for(preset)?;
    spec.resolve()?;
    let outcomes: Vec<Result<Replica>> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replica(config, &spec, preset, n_priors, r, reference))
        .collect();
    summarise(Some(preset), n_priors, outcomes, reference)
}

/// K replications of the moment estimator on the true law itself.
pub fn run_true_model(config: &ExperimentConfig, reference: &TrueReference) -> Result<CellSummary> {
    let law = build_asset_law(&config.true_params, &config.asset_law)?;
    let outcomes: Vec<Result<Replica>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(
                config.rng_seed,
                &[preset_code(None), 0, r as u64, rng::tag::SAMPLE],
            );
            solve_on(&law, config, seed, reference)
        })
        .collect();
    summarise(None, 0, outcomes, reference)
}

/// Runs the true-model row and every (preset, N) cell on a pool of
/// `threads` workers (all cores when `None`).
pub fn run_experiment(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentReport> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::validation("threads", e.to_string()))?;
    pool.install(|| {
        let reference = true_reference(config)?;
        let true_row = run_true_model(config, &reference)?;
        log::info!(
            "true model: expected surplus {:.2}, std {:.2}",
            true_row.mean_expected_surplus,
            true_row.mean_surplus_std
        );
        let mut cells = Vec::new();
        for &preset in &config.presets {
            for &n in &config.prior_counts {
                let cell = run_cell(config, &reference, n, preset)?;
                log::info!(
                    "{}: expected surplus {:.2} ({:.2}), failures {}",
                    cell.label(),
                    cell.mean_expected_surplus,
                    cell.se_expected_surplus,
                    cell.failures
                );
                cells.push(cell);
            }
        }
        Ok(ExperimentReport {
            config_hash: config.hash(),
            rng_seed: config.rng_seed,
            reference,
            true_row,
            cells,
        })
    })
}

/// One configuration of the true-model sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bond_mode: BondMode,
    pub ito_correction: bool,
    pub horizon: f64,
    /// Common off-diagonal of `ρ_B`.
    pub rho_b: f64,
    pub allocation_pct: Vec<f64>,
    pub expected_surplus: f64,
    pub surplus_std: f64,
    pub allocation_hit: bool,
    pub std_hit: bool,
}

/// Targets for [`sensitivity_sweep`]: allocations in percent with an
/// absolute tolerance in percentage points, and a surplus std with a
/// relative tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTargets {
    pub allocation_pct: Vec<f64>,
    pub allocation_tol_pp: f64,
    pub surplus_std: f64,
    pub std_rel_tol: f64,
}

/// True-model portfolio (exact moments) across bond law, Itô correction,
/// horizon and insurance-factor correlation.
pub fn sensitivity_sweep(
    params: &MarketParams,
    problem: &ProblemSpec,
    horizons: &[f64],
    rho_b_values: &[f64],
    targets: &SweepTargets,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for bond_mode in [BondMode::IntegratedOuExact, BondMode::ShortRateProxy] {
        for ito_correction in [false, true] {
            for &horizon in horizons {
                for &rho in rho_b_values {
                    let mut p = params.clone();
                    p.horizon = horizon;
                    let m = p.m();
                    let rho_w = p.rho_w()?;
                    p.correlations = Some(Correlations {
                        rho_w: (0..p.n())
                            .map(|i| rho_w.row(i).iter().copied().collect())
                            .collect(),
                        rho_b: (0..m)
                            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { rho }).collect())
                            .collect(),
                    });
                    let cfg = AssetLawConfig {
                        bond_mode,
                        ito_correction,
                        normalize_to_gross_returns: true,
                    };
                    let sol =
                        solve_portfolio(&moments_analytic(&build_asset_law(&p, &cfg)?)?, problem)?;
                    let allocation_hit = sol.theta_pct.len() == targets.allocation_pct.len()
                        && sol
                            .theta_pct
                            .iter()
                            .zip(&targets.allocation_pct)
                            .all(|(a, b)| (a - b).abs() <= targets.allocation_tol_pp);
                    let std_hit = (sol.surplus_std - targets.surplus_std).abs()
                        <= targets.std_rel_tol * targets.surplus_std;
                    rows.push(SweepRow {
                        bond_mode,
                        ito_correction,
                        horizon,
                        rho_b: rho,
                        allocation_pct: sol.theta_pct,
                        expected_surplus: sol.expected_surplus,
                        surplus_std: sol.surplus_std,
                        allocation_hit,
                        std_hit,
                    });
                }
            }
        }
    }
    Ok(rows)
}

//! Prior sets generated by uniformly perturbing a reference market.
//!
//! Perturbed scalars: `R0`, `κ`, `σ_r` (rate block); `μ`, `σ` (stocks);
//! `α`, `β`, `γ` (liability); off-diagonal entries of `ρ_W` and `ρ_B`
//! (correlations). Initial values `r0`, `s0`, `l0` and the horizon are kept.
//! Every scalar gets its own independent draw.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::barycenter::PriorSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::market::{build_asset_law, AssetLawConfig, Correlations, MarketParams};
use crate::rng;

/// Floor applied to mean-reversion speed and volatility loadings.
pub const POSITIVE_FLOOR: f64 = 1e-8;
/// Off-diagonal correlations are clipped to this magnitude before projection.
pub const MAX_CORRELATION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Homogeneity {
    High,
    Medium,
    Low,
    Custom,
}

impl Homogeneity {
    pub fn as_str(self) -> &'static str {
        match self {
            Homogeneity::High => "high",
            Homogeneity::Medium => "medium",
            Homogeneity::Low => "low",
            Homogeneity::Custom => "custom",
        }
    }

    /// Half-width of the preset bounds.
    pub fn half_width(self) -> Option<f64> {
        match self {
            Homogeneity::High => Some(0.05),
            Homogeneity::Medium => Some(0.15),
            Homogeneity::Low => Some(0.40),
            Homogeneity::Custom => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `x + η |x|`; parameters whose reference value is zero get `x + η`.
    Relative,
    /// `x + η`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockBounds {
    pub kind: BoundKind,
    pub lower: f64,
    pub upper: f64,
}

impl BlockBounds {
    pub fn relative(h: f64) -> Self {
        Self {
            kind: BoundKind::Relative,
            lower: -h,
            upper: h,
        }
    }

    pub fn absolute(h: f64) -> Self {
        Self {
            kind: BoundKind::Absolute,
            lower: -h,
            upper: h,
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::validation(field, "bounds must be finite"));
        }
        if self.lower > self.upper {
            return Err(Error::validation(
                field,
                format!(
                    "lower bound {} exceeds upper bound {}",
                    self.lower, self.upper
                ),
            ));
        }
        Ok(())
    }

    /// Offset added to `x` for a uniform draw `η`.
    fn offset(&self, x: f64, eta: f64) -> f64 {
        match self.kind {
            BoundKind::Relative if x != 0.0 => eta * x.abs(),
            _ => eta,
        }
    }

    fn draw<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        let eta = if self.lower == self.upper {
            self.lower
        } else {
            rng.random_range(self.lower..self.upper)
        };
        x + self.offset(x, eta)
    }
}

/// Uniform perturbation bounds for the four parameter blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub preset: Homogeneity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<BlockBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stocks: Option<BlockBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liability: Option<BlockBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<BlockBounds>,
}

/// Bounds of all blocks after resolving a preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedBounds {
    pub rate: BlockBounds,
    pub stocks: BlockBounds,
    pub liability: BlockBounds,
    pub correlations: BlockBounds,
}

impl PerturbationSpec {
    pub fn preset(level: Homogeneity) -> Self {
        Self {
            preset: level,
            rate: None,
            stocks: None,
            liability: None,
            correlations: None,
        }
    }

    /// Same bounds on every block.
    pub fn uniform(bounds: BlockBounds) -> Self {
        Self {
            preset: Homogeneity::Custom,
            rate: Some(bounds),
            stocks: Some(bounds),
            liability: Some(bounds),
            correlations: Some(bounds),
        }
    }

    pub fn resolve(&self) -> Result<ResolvedBounds> {
        let blocks = [
            ("perturbation.rate", self.rate),
            ("perturbation.stocks", self.stocks),
            ("perturbation.liability", self.liability),
            ("perturbation.correlations", self.correlations),
        ];
        let resolved = match self.preset.half_width() {
            Some(h) => {
                if let Some((field, _)) = blocks.iter().find(|(_, b)| b.is_some()) {
                    return Err(Error::validation(
                        *field,
                        format!(
                            "explicit bounds require preset `custom`, got `{}`",
                            self.preset.as_str()
                        ),
                    ));
                }
                ResolvedBounds {
                    rate: BlockBounds::relative(h),
                    stocks: BlockBounds::relative(h),
                    liability: BlockBounds::relative(h),
                    correlations: BlockBounds::absolute(h),
                }
            }
            None => {
                let get = |i: usize| {
                    blocks[i].1.ok_or_else(|| {
                        Error::validation(blocks[i].0, "required when preset is `custom`")
                    })
                };
                ResolvedBounds {
                    rate: get(0)?,
                    stocks: get(1)?,
                    liability: get(2)?,
                    correlations: get(3)?,
                }
            }
        };
        for (field, b) in [
            (blocks[0].0, resolved.rate),
            (blocks[1].0, resolved.stocks),
            (blocks[2].0, resolved.liability),
            (blocks[3].0, resolved.correlations),
        ] {
            b.validate(field)?;
        }
        Ok(resolved)
    }
}

/// Rejects bounds under which a positive parameter can never stay positive.
fn check_positive_reachable(field: &str, values: &[f64], bounds: &BlockBounds) -> Result<()> {
    for (i, &x) in values.iter().enumerate() {
        if x > 0.0 && x + bounds.offset(x, bounds.upper) <= 0.0 {
            return Err(Error::validation(
                format!("{field}[{i}]"),
                format!("perturbation bounds force the positive value {x} to be non-positive"),
            ));
        }
    }
    Ok(())
}

fn perturb_correlation<R: Rng>(
    rows: &[Vec<f64>],
    bounds: &BlockBounds,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut m = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = bounds
                .draw(m[(i, j)], rng)
                .clamp(-MAX_CORRELATION, MAX_CORRELATION);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let p = linalg::project_correlation(&m);
    (0..n)
        .map(|i| (0..n).map(|j| p[(i, j)]).collect())
        .collect()
}

fn perturb_one(
    reference: &MarketParams,
    b: &ResolvedBounds,
    seed: u64,
    index: usize,
) -> MarketParams {
    let mut rng = rng::stream(seed, &[rng::tag::PERTURB, index as u64]);
    let mut p = reference.clone();
    let floor = |v: f64| v.max(POSITIVE_FLOOR);

    p.rate.long_run = b.rate.draw(p.rate.long_run, &mut rng);
    p.rate.kappa = floor(b.rate.draw(p.rate.kappa, &mut rng));
    for v in p.rate.sigma_r.iter_mut() {
        *v = floor(b.rate.draw(*v, &mut rng));
    }
    for v in p.stocks.mu.iter_mut() {
        *v = b.stocks.draw(*v, &mut rng);
    }
    for row in p.stocks.sigma.iter_mut() {
        for v in row.iter_mut() {
            *v = floor(b.stocks.draw(*v, &mut rng));
        }
    }
    p.liability.alpha = b.liability.draw(p.liability.alpha, &mut rng);
    for v in p.liability.beta.iter_mut() {
        *v = b.liability.draw(*v, &mut rng);
    }
    for v in p.liability.gamma.iter_mut() {
        *v = floor(b.liability.draw(*v, &mut rng));
    }
    let rho_w = reference.rho_w().expect("reference validated");
    let rho_b = reference.rho_b().expect("reference validated");
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect()
    };
    p.correlations = Some(Correlations {
        rho_w: perturb_correlation(&rows(&rho_w), &b.correlations, &mut rng),
        rho_b: perturb_correlation(&rows(&rho_b), &b.correlations, &mut rng),
    });
    p
}

/// `count` perturbed copies of `reference`. Replica `j` uses its own random
/// stream derived from `(seed, j)`, so any subset can be regenerated alone.
pub fn perturb(
    reference: &MarketParams,
    spec: &PerturbationSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<MarketParams>> {
    if count == 0 {
        return Err(Error::validation("count", "must be at least 1"));
    }
    reference.validate()?;
    let b = spec.resolve()?;
    check_positive_reachable("rate.kappa", &[reference.rate.kappa], &b.rate)?;
    check_positive_reachable("rate.sigma_r", &reference.rate.sigma_r, &b.rate)?;
    for (i, row) in reference.stocks.sigma.iter().enumerate() {
        check_positive_reachable(&format!("stocks.sigma[{i}]"), row, &b.stocks)?;
    }
    check_positive_reachable("liability.gamma", &reference.liability.gamma, &b.liability)?;

    (0..count)
        .map(|j| {
            let p = perturb_one(reference, &b, seed, j);
            p.validate().map_err(|e| Error::Replica {
                index: j,
                source: Box::new(e),
            })?;
            Ok(p)
        })
        .collect()
}

/// Maps each parameter set to its asset law and attaches the weights
/// (equal weights when `None`).
pub fn to_prior_set(
    params: &[MarketParams],
    weights: Option<&[f64]>,
    config: &AssetLawConfig,
) -> Result<PriorSet> {
    let models = params
        .iter()
        .enumerate()
        .map(|(j, p)| {
            build_asset_law(p, config).map_err(|e| Error::Replica {
                index: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match weights {
        Some(w) => {
            if w.len() != models.len() {
                return Err(Error::DimensionMismatch {
                    context: "to_prior_set weights",
                    expected: models.len(),
                    found: w.len(),
                });
            }
            PriorSet::new(models, w.to_vec())
        }
        None => PriorSet::equally_weighted(models),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barycenter::{barycenter, BarycenterOptions};

    fn scalars(p: &MarketParams) -> Vec<f64> {
        let mut v = vec![p.rate.long_run, p.rate.kappa];
        v.extend(&p.rate.sigma_r);
        v.extend(&p.stocks.mu);
        p.stocks.sigma.iter().for_each(|r| v.extend(r));
        v.push(p.liability.alpha);
        v.extend(&p.liability.beta);
        v.extend(&p.liability.gamma);
        v
    }

    #[test]
    fn zero_width_bounds_copy_the_reference() {
        let reference = MarketParams::benchmark();
        let spec = PerturbationSpec::uniform(BlockBounds::absolute(0.0));
        for p in perturb(&reference, &spec, 5, 1).unwrap() {
            assert_eq!(scalars(&p), scalars(&reference));
            assert_eq!(p.rho_w().unwrap(), reference.rho_w().unwrap());
            assert_eq!(p.rho_b().unwrap(), reference.rho_b().unwrap());
        }
    }

    #[test]
    fn deterministic_and_stream_split() {
        let reference = MarketParams::benchmark();
        let spec = PerturbationSpec::preset(Homogeneity::Medium);
        let a = perturb(&reference, &spec, 6, 77).unwrap();
        assert_eq!(a, perturb(&reference, &spec, 6, 77).unwrap());
        // replica j does not depend on how many replicas are drawn
        assert_eq!(a[..3], perturb(&reference, &spec, 3, 77).unwrap()[..]);
        assert_ne!(a, perturb(&reference, &spec, 6, 78).unwrap());
    }

    #[test]
    fn uniform_draws_are_centred() {
        let reference = MarketParams::benchmark();
        let h = 0.15;
        let spec = PerturbationSpec::preset(Homogeneity::Medium);
        let draws = perturb(&reference, &spec, 10_000, 5).unwrap();
        let truth = scalars(&reference);
        for (k, x) in truth.iter().enumerate() {
            let mean = draws.iter().map(|p| scalars(p)[k]).sum::<f64>() / draws.len() as f64;
            // U(-h, h) offset has sd h/sqrt(3), scaled by |x| (or 1 when x = 0)
            let scale = if *x == 0.0 { 1.0 } else { x.abs() };
            let se = h * scale / 3f64.sqrt() / 100.0;
            assert!((mean - x).abs() < 3.0 * se, "scalar {k}: {mean} vs {x}");
        }
    }

    #[test]
    fn wider_presets_deviate_more() {
        let reference = MarketParams::benchmark();
        let truth = scalars(&reference);
        let deviation = |level| {
            let draws = perturb(&reference, &PerturbationSpec::preset(level), 1000, 9).unwrap();
            draws
                .iter()
                .map(|p| {
                    scalars(p)
                        .iter()
                        .zip(&truth)
                        .map(|(a, b)| ((a - b) / if *b == 0.0 { 1.0 } else { b.abs() }).abs())
                        .sum::<f64>()
                })
                .sum::<f64>()
        };
        let (high, medium, low) = (
            deviation(Homogeneity::High),
            deviation(Homogeneity::Medium),
            deviation(Homogeneity::Low),
        );
        assert!(high < medium && medium < low, "{high} {medium} {low}");
    }

    #[test]
    fn generated_markets_are_valid() {
        let mut reference = MarketParams::benchmark();
        reference.correlations = Some(Correlations {
            rho_w: vec![vec![1.0, 0.95], vec![0.95, 1.0]],
            rho_b: vec![vec![1.0, -0.5], vec![-0.5, 1.0]],
        });
        let spec = PerturbationSpec::uniform(BlockBounds::absolute(0.9));
        for p in perturb(&reference, &spec, 200, 3).unwrap() {
            p.validate().unwrap();
            assert!(p.rate.kappa >= POSITIVE_FLOOR);
            let c = p.correlations.unwrap();
            assert!(c.rho_w[0][1].abs() <= MAX_CORRELATION + 1e-12);
        }
    }

    #[test]
    fn bounds_forcing_negativity_are_rejected() {
        let spec = PerturbationSpec {
            preset: Homogeneity::Custom,
            rate: Some(BlockBounds {
                kind: BoundKind::Relative,
                lower: -3.0,
                upper: -1.5,
            }),
            stocks: Some(BlockBounds::relative(0.1)),
            liability: Some(BlockBounds::relative(0.1)),
            correlations: Some(BlockBounds::absolute(0.1)),
        };
        let e = perturb(&MarketParams::benchmark(), &spec, 3, 0).unwrap_err();
        assert!(
            matches!(e, Error::Validation { ref field, .. } if field == "rate.kappa[0]"),
            "{e}"
        );
    }

    #[test]
    fn preset_resolution() {
        let r = PerturbationSpec::preset(Homogeneity::Low)
            .resolve()
            .unwrap();
        assert_eq!(r.stocks, BlockBounds::relative(0.40));
        assert_eq!(r.correlations, BlockBounds::absolute(0.40));
        let mut s = PerturbationSpec::preset(Homogeneity::High);
        s.rate = Some(BlockBounds::relative(0.1));
        assert!(s.resolve().is_err());
        assert!(PerturbationSpec::preset(Homogeneity::Custom)
            .resolve()
            .is_err());
        let json = r#"{"preset":"custom","rate":{"kind":"relative","lower":0.1,"upper":-0.1},
            "stocks":{"kind":"relative","lower":0,"upper":0},"liability":{"kind":"relative","lower":0,"upper":0},
            "correlations":{"kind":"absolute","lower":0,"upper":0}}"#;
        let s: PerturbationSpec = serde_json::from_str(json).unwrap();
        assert!(
            matches!(s.resolve(), Err(Error::Validation { field, .. }) if field == "perturbation.rate")
        );
    }

    #[test]
    fn prior_set_of_copies_has_the_reference_barycenter() {
        let reference = MarketParams::benchmark();
        let cfg = AssetLawConfig::default();
        let set = to_prior_set(&vec![reference.clone(); 4], None, &cfg).unwrap();
        let bary = barycenter(&set, BarycenterOptions::default()).unwrap();
        let truth = build_asset_law(&reference, &cfg).unwrap();
        assert!((bary.model.mean() - truth.mean()).amax() <= 1e-9 * truth.mean().amax());
        assert!(linalg::scaled_frobenius_diff(bary.model.cov(), truth.cov()) < 1e-9);

        let single = to_prior_set(&[reference], Some(&[1.0]), &cfg).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.models()[0], truth);
    }

    #[test]
    fn thirty_tight_priors_concentrate() {
        let reference = MarketParams::benchmark();
        let cfg = AssetLawConfig::default();
        let params = perturb(
            &reference,
            &PerturbationSpec::preset(Homogeneity::High),
            30,
            21,
        )
        .unwrap();
        let set = to_prior_set(&params, None, &cfg).unwrap();
        let bary = barycenter(&set, BarycenterOptions::default()).unwrap();
        let truth = build_asset_law(&reference, &cfg).unwrap();
        // half-width of each mean coordinate under the preset: 5% of each
        // drift-type input times the horizon
        let t = reference.horizon;
        let half = [
            0.05 * reference.liability.alpha.abs() * t,
            0.05 * reference.rate.long_run * t,
            0.05 * reference.stocks.mu[0] * t,
            0.05 * reference.stocks.mu[1] * t,
        ];
        for (k, h) in half.iter().enumerate() {
            let err = (bary.model.mean()[k] - truth.mean()[k]).abs();
            assert!(
                err <= h / 30f64.sqrt() * 4.0,
                "coordinate {k}: {err} vs {h}"
            );
        }
    }

    #[test]
    fn replica_errors_name_the_index() {
        let mut bad = MarketParams::benchmark();
        bad.rate.kappa = -1.0;
        let e = to_prior_set(
            &[MarketParams::benchmark(), bad],
            None,
            &AssetLawConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(e, Error::Replica { index: 1, .. }), "{e}");
    }
}

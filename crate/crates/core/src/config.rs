//! JSON configuration files and their loading diagnostics.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::barycenter::{BarycenterOptions, PriorSet};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, MomentEstimator, SCHEMA_VERSION};
use crate::market::{AssetLawConfig, MarketParams};
use crate::portfolio::ProblemSpec;

fn default_optimize_samples() -> usize {
    100_000
}

/// Input of a single portfolio optimisation: either one market or a prior
/// set of asset laws (aggregated by its barycenter first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<PriorSet>,
    #[serde(alias = "spec")]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub asset_law: AssetLawConfig,
    #[serde(default)]
    pub moment_estimator: MomentEstimator,
    #[serde(default = "default_optimize_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub barycenter: BarycenterOptions,
}

impl OptimizeConfig {
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
        let assets = match (&self.market, &self.priors) {
            (Some(m), None) => {
                m.validate()?;
                m.n() + 1
            }
            (None, Some(p)) => {
                if p.dim() < 2 {
                    return Err(Error::validation(
                        "priors",
                        "models need dimension n + 2 >= 2",
                    ));
                }
                p.dim() - 1
            }
            _ => {
                return Err(Error::validation(
                    "market",
                    "give exactly one of `market` and `priors`",
                ))
            }
        };
        if self.moment_estimator == MomentEstimator::Mc && self.mc_samples < 1000 {
            return Err(Error::validation("mc_samples", "must be at least 1000"));
        }
        self.problem.validate(Some(assets))
    }
}

/// Kinds of documents accepted by the command-line tool.
#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Experiment(Box<ExperimentConfig>),
    Optimize(Box<OptimizeConfig>),
    Priors(PriorSet),
    Market(Box<MarketParams>),
}

impl Document {
    pub fn kind(&self) -> &'static str {
        match self {
            Document::Experiment(_) => "experiment config",
            Document::Optimize(_) => "optimize config",
            Document::Priors(_) => "prior set",
            Document::Market(_) => "market parameters",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Document::Experiment(c) => c.validate(),
            Document::Optimize(c) => c.validate(),
            // invariants are enforced during deserialisation
            Document::Priors(_) => Ok(()),
            Document::Market(m) => m.validate(),
        }
    }
}

fn parse_error(context: &str, e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let inner = e.into_inner();
    Error::Parse {
        context: context.to_string(),
        message: format!(
            "line {}, column {}, at `{}`: {}",
            inner.line(),
            inner.column(),
            path,
            inner
        ),
    }
}

/// Deserialises `text`, reporting the JSON path and position of failures.
pub fn parse_json<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| parse_error(context, e))?;
    de.end().map_err(|e| Error::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

/// Parses a document, telling the kind apart by its top-level keys.
pub fn parse_document(text: &str, context: &str) -> Result<Document> {
    let probe: serde_json::Value = parse_json(text, context)?;
    let has = |k: &str| probe.get(k).is_some();
    if has("true_params") {
        Ok(Document::Experiment(Box::new(parse_json(text, context)?)))
    } else if has("problem") || has("spec") {
        Ok(Document::Optimize(Box::new(parse_json(text, context)?)))
    } else if has("models") {
        Ok(Document::Priors(parse_json(text, context)?))
    } else if has("rate") {
        Ok(Document::Market(Box::new(parse_json(text, context)?)))
    } else {
        Err(Error::Parse {
            context: context.to_string(),
            message: "unrecognised document: expected an experiment config, optimize config, prior set or market".into(),
        })
    }
}

/// Template documents for every accepted file kind.
pub fn templates() -> serde_json::Value {
    let market = MarketParams::benchmark();
    let law = crate::market::build_asset_law(&market, &AssetLawConfig::default())
        .expect("benchmark is valid");
    let priors = PriorSet::equally_weighted(vec![law.clone(), law]).expect("valid prior set");
    serde_json::json!({
        "experiment": ExperimentConfig::desk_default(0),
        "optimize": OptimizeConfig {
            schema: SCHEMA_VERSION,
            market: Some(market.clone()),
            priors: None,
            problem: ProblemSpec::new(0.0, 1_000_000.0),
            asset_law: AssetLawConfig::default(),
            moment_estimator: MomentEstimator::Mc,
            mc_samples: default_optimize_samples(),
            rng_seed: 0,
            barycenter: BarycenterOptions::default(),
        },
        "barycenter": priors,
        "market": market,
    })
}

//! Robust static asset-liability management under model ambiguity.
//!
//! A set of prior Gaussian market models is aggregated into its weighted
//! Wasserstein-2 barycenter, and the mean-variance surplus problem is solved
//! in closed form under that aggregate law.
//!
//! Module map:
//!
//! - [`linalg`], [`gaussian`]: symmetric-matrix utilities, the Gaussian model
//!   type, W2 distance and sampling.
//! - [`barycenter`]: prior sets, Fréchet variance, barycenter fixed point.
//! - [`market`]: market parameters and the joint Gaussian laws they induce.
//! - [`portfolio`]: moment bundles and the closed-form surplus optimiser.
//! - [`priors`]: perturbed prior generation.
//! - [`experiment`], [`tables`]: the replication harness and its CSV output.
//! - [`config`], [`cli`]: JSON config documents and the command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod linalg;
pub mod market;
pub mod portfolio;
pub mod priors;
pub mod rng;
pub mod tables;

pub use barycenter::{barycenter, frechet_variance, BarycenterOptions, BarycenterResult, PriorSet};
pub use error::{Error, Result};
pub use experiment::{run_experiment, CellSummary, ExperimentConfig, ExperimentReport};
pub use gaussian::{w2_distance_sq, GaussianModel};
pub use market::{build_asset_law, build_joint_law, AssetLawConfig, BondMode, MarketParams};
pub use portfolio::{
    evaluate_portfolio, moments_analytic, moments_mc, solve_portfolio, MomentBundle,
    PortfolioSolution, ProblemSpec,
};
pub use priors::{perturb, to_prior_set, Homogeneity, PerturbationSpec};

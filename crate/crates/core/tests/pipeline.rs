use approx::assert_relative_eq;

use robust_alm::market::{LiabilityParams, RateParams, StockParams};
use robust_alm::{
    barycenter, build_asset_law, moments_analytic, solve_portfolio, AssetLawConfig, MarketParams,
    PriorSet, ProblemSpec,
};

#[test]
fn identical_priors_reproduce_the_single_model_portfolio() {
    let law = build_asset_law(&MarketParams::benchmark(), &AssetLawConfig::default()).unwrap();
    let problem = ProblemSpec::new(0.0, 1_000_000.0);
    let single = solve_portfolio(&moments_analytic(&law).unwrap(), &problem).unwrap();
    for n in [1, 2, 5] {
        let b = barycenter(
            &PriorSet::equally_weighted(vec![law.clone(); n]).unwrap(),
            Default::default(),
        )
        .unwrap();
        assert!(b.converged);
        let sol = solve_portfolio(&moments_analytic(&b.model).unwrap(), &problem).unwrap();
        for (a, e) in sol.theta_pct.iter().zip(&single.theta_pct) {
            assert!(
                (a - e).abs() < 1e-3,
                "N={n}: {:?} vs {:?}",
                sol.theta_pct,
                single.theta_pct
            );
        }
        assert_relative_eq!(sol.surplus_std, single.surplus_std, max_relative = 1e-8);
    }
}

#[test]
fn bond_only_market_puts_everything_in_the_bond() {
    let params = MarketParams {
        rate: RateParams {
            r0: 0.03,
            long_run: 0.03,
            kappa: 0.5,
            sigma_r: vec![],
        },
        stocks: StockParams {
            s0: vec![],
            mu: vec![],
            sigma: vec![],
        },
        liability: LiabilityParams {
            l0: 0.0,
            alpha: 900.0,
            beta: vec![],
            gamma: vec![50.0],
        },
        correlations: None,
        horizon: 1.0,
        n: Some(0),
        m: Some(1),
    };
    let law = build_asset_law(&params, &AssetLawConfig::default()).unwrap();
    assert_eq!(law.dim(), 2);
    let sol = solve_portfolio(
        &moments_analytic(&law).unwrap(),
        &ProblemSpec::new(0.0, 1000.0),
    )
    .unwrap();
    assert_relative_eq!(sol.theta[0], 1000.0, max_relative = 1e-12);
    // deterministic rate: surplus is 1000 e^{0.03} - E[L] with std of L alone
    assert_relative_eq!(
        sol.expected_surplus,
        1000.0 * 0.03f64.exp() - 900.0,
        max_relative = 1e-10
    );
    assert_relative_eq!(sol.surplus_std, 50.0, max_relative = 1e-10);
}

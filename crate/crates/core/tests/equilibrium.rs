mod common;

use common::*;
use equilibria::equilibrium::{
    agreeable_at, check_assumptions, demand, mutually_agreeable, pareto_check, price_in_range, solve_pepa,
    Agreeability, Allocation, Bundle, SolverConfig,
};
use equilibria::market::Claim;
use equilibria::risk::{grad_r, RiskEvaluator};
use equilibria::{Assumption, Error};

#[test]
fn fix_c_agent_two_buys_the_claim() {
    let c = fixture("fix_c");
    let eq = solve_pepa(&c.agents, &c.market, &c.bundle, &SolverConfig::default()).unwrap();
    assert!(eq.allocation.weights[1][0] > 0.0);
    assert!(eq.allocation.column_sums()[0].abs() < 1e-12);
    assert!(eq.price[0] > 0.5 && eq.price[0] < 1.0);
    // Each agent's marginal price at its holding is the equilibrium price.
    for (model, a) in c.agents.iter().zip(&eq.allocation.weights) {
        let (_, g) = grad_r(model, &c.market, &c.bundle, a).unwrap();
        assert!((-g[0] - eq.price[0]).abs() < 1e-8);
    }
}

#[test]
fn demand_inverts_the_marginal_price() {
    let d = fixture("fix_d");
    for model in &d.agents {
        let a = [0.3, -0.2];
        let (_, g) = grad_r(model, &d.market, &d.bundle, &a).unwrap();
        let p: Vec<f64> = g.iter().map(|v| -v).collect();
        let z = demand(model, &d.market, &d.bundle, &p).unwrap();
        assert!(sup_diff(&z, &a) < 1e-6, "{z:?}");
    }
}

#[test]
fn zero_demand_at_the_indifference_price() {
    let c = fixture("fix_c");
    let ev = RiskEvaluator::new(&c.agents[1], &c.market).unwrap();
    let p = c.bundle.prices_under(ev.measure_at_zero());
    let z = demand(&c.agents[1], &c.market, &c.bundle, &p).unwrap();
    assert!(sup(&z) < 1e-8);
}

#[test]
fn prices_outside_the_range_have_no_demand() {
    let b = fixture("fix_b");
    assert!(!price_in_range(&b.agents[0], &b.market, &b.bundle, &[1.0]).unwrap());
    assert!(price_in_range(&b.agents[0], &b.market, &b.bundle, &[0.3]).unwrap());
    assert!(matches!(
        demand(&b.agents[0], &b.market, &b.bundle, &[1.1]),
        Err(Error::PriceOutsideRange { .. })
    ));
}

#[test]
fn fix_d_clears_with_small_residuals() {
    let d = fixture("fix_d");
    let eq = solve_pepa(&d.agents, &d.market, &d.bundle, &d.solver).unwrap();
    assert!(eq.clearing_residual < 1e-6 && eq.foc_residual < 1e-6);
    assert!(sup(&eq.allocation.column_sums()) < 1e-12);
    assert_eq!(eq.optimizer_measures.len(), 3);
}

#[test]
fn redundant_bundle_is_rejected() {
    let b = fixture("fix_b");
    let bundle = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0]), Claim(vec![0.0, 1.0, 0.0, 1.0])]).unwrap();
    match solve_pepa(&b.agents, &b.market, &bundle, &SolverConfig::default()) {
        Err(Error::AssumptionViolated { assumption, .. }) => assert_eq!(assumption, Assumption::NonRedundancy),
        other => panic!("expected non-redundancy failure, got {other:?}"),
    }
    assert!(check_assumptions(&b.agents, &b.market, &b.bundle).unwrap() > 0.0);
}

#[test]
fn allocations_must_clear() {
    assert!(Allocation::new(vec![vec![1.0], vec![-0.5]]).is_err());
    assert!(Allocation::new(vec![vec![1.0, 2.0], vec![-1.0, -2.0]]).is_ok());
}

#[test]
fn pareto_configuration() {
    let b = fixture("fix_b");
    let p = pareto_check(&b.agents, &b.market).unwrap();
    assert!(p.is_pareto);
    assert!(sup_diff(p.common_measure.as_ref().unwrap(), &[0.25; 4]) < 1e-9);
    assert!(!pareto_check(&fixture("fix_c").agents, &fixture("fix_c").market).unwrap().is_pareto);
}

#[test]
fn large_trades_are_refused() {
    let b = fixture("fix_b");
    let alloc = Allocation::new(vec![vec![1.0], vec![-1.0]]).unwrap();
    match mutually_agreeable(&b.agents, &b.market, &b.bundle, &alloc).unwrap() {
        Agreeability::Refused { lambda, value } => {
            assert!(value > 0.0);
            assert!((lambda.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        other => panic!("expected refusal, got {other:?}"),
    }
    let c = fixture("fix_c");
    let eq = solve_pepa(&c.agents, &c.market, &c.bundle, &SolverConfig::default()).unwrap();
    assert!(agreeable_at(&c.agents, &c.market, &c.bundle, &eq.allocation, &eq.price).unwrap() < 0.0);
}

use crate::error::{Assumption, Error, Result};
use crate::market::{
    check_non_redundancy, strictly_positive_point, FiniteMarket, MarketView, MartingalePolytope, LP_TOL,
};
use crate::optim::{inf_norm, minimize, BfgsOptions, BfgsStatus};
use crate::risk::{strict_convexity_probe, ProbeSamples, RiskEvaluator, RiskModel};

use super::demand::demand_with;
use super::{Allocation, Bundle, PepaResult, PriceVector, SolverConfig};

const ACCEPT: f64 = 1e-8;

fn format_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Verifies the standing assumptions of the equilibrium problem: common
/// martingale measures, non-redundancy of the bundle and strict convexity of
/// every `a -> rho_i(a . B)`.
pub fn check_assumptions(agents: &[RiskModel], market: &FiniteMarket, bundle: &Bundle) -> Result<f64> {
    if agents.is_empty() {
        return Err(Error::InvalidModel("no agents".into()));
    }
    if bundle.num_states() != market.num_states() {
        return Err(Error::Dimension(format!(
            "bundle has {} states, market {}",
            bundle.num_states(),
            market.num_states()
        )));
    }
    for a in agents {
        a.validate(market)?;
    }
    let union = MarketView::union(agents.iter().map(|a| &a.view));
    match strictly_positive_point(market, &union, &[]) {
        Some((_, t)) if t > LP_TOL => {}
        _ => {
            return Err(Error::assumption(
                Assumption::NonEmptyIntersection,
                "no strictly positive measure is a martingale measure for every agent",
            ))
        }
    }
    let nr = check_non_redundancy(market, bundle, &MartingalePolytope { view: union });
    if !nr.holds {
        let delta = nr.witness.unwrap_or_default();
        return Err(Error::assumption(
            Assumption::NonRedundancy,
            format!("delta = {} has a constant price over the common martingale measures", format_vec(&delta)),
        ));
    }
    let mut min_normalized = f64::INFINITY;
    for (i, agent) in agents.iter().enumerate() {
        let rep = strict_convexity_probe(
            agent,
            market,
            bundle,
            &ProbeSamples::Random {
                count: 8,
                radius: 2.0,
                seed: 0x5eed + i as u64,
            },
        )?;
        if let Some(dir) = &rep.equality_direction {
            return Err(Error::assumption(
                Assumption::StrictConvexity,
                format!("agent {i}: risk is affine along delta = {}", format_vec(dir)),
            ));
        }
        if let Some(v) = rep.violations.first() {
            return Err(Error::assumption(
                Assumption::StrictConvexity,
                format!(
                    "agent {i}: midpoint margin {:e} between {} and {}",
                    v.margin,
                    format_vec(&v.a),
                    format_vec(&v.delta)
                ),
            ));
        }
        min_normalized = min_normalized.min(rep.min_normalized_margin);
    }
    Ok(min_normalized)
}

/// The unique partial-equilibrium price-allocation, starting from zero trade.
pub fn solve_pepa(agents: &[RiskModel], market: &FiniteMarket, bundle: &Bundle, config: &SolverConfig) -> Result<PepaResult> {
    check_assumptions(agents, market, bundle)?;
    minimize_aggregate(agents, market, bundle, config, None)
}

/// As [`solve_pepa`], from a given feasible allocation.
pub fn solve_pepa_from(
    agents: &[RiskModel],
    market: &FiniteMarket,
    bundle: &Bundle,
    config: &SolverConfig,
    start: &Allocation,
) -> Result<PepaResult> {
    check_assumptions(agents, market, bundle)?;
    if start.num_agents() != agents.len() {
        return Err(Error::Dimension("start allocation has the wrong number of agents".into()));
    }
    minimize_aggregate(agents, market, bundle, config, Some(start))
}

/// Minimizes `f(a) = sum_{i<I} r_i(a_i) + r_I(-sum_{i<I} a_i)`.
pub(crate) fn minimize_aggregate(
    agents: &[RiskModel],
    market: &FiniteMarket,
    bundle: &Bundle,
    config: &SolverConfig,
    start: Option<&Allocation>,
) -> Result<PepaResult> {
    let n = bundle.len();
    let count = agents.len();
    let mut evs = agents
        .iter()
        .map(|a| RiskEvaluator::new(a, market))
        .collect::<Result<Vec<_>>>()?;
    let x0: Vec<f64> = match start {
        Some(s) => s.weights[..count - 1].iter().flatten().copied().collect(),
        None => vec![0.0; (count - 1) * n],
    };
    let opts = BfgsOptions {
        grad_tol: config.gradient_tol,
        max_iterations: config.max_iterations,
        divergence_bound: config.divergence_bound,
    };
    let out = minimize(
        |x| {
            let alloc = Allocation::from_leading_rows(x, count, n);
            let mut total = 0.0;
            let mut grads = Vec::with_capacity(count);
            for (ev, a) in evs.iter_mut().zip(&alloc.weights) {
                let (r, g, _) = ev.r_and_grad(bundle, a)?;
                total += r;
                grads.push(g);
            }
            let last = grads.pop().expect("at least one agent");
            let grad = grads
                .iter()
                .flat_map(|g| g.iter().zip(&last).map(|(a, b)| a - b).collect::<Vec<_>>())
                .collect();
            Ok((total, grad))
        },
        &x0,
        &opts,
    )?;
    let gnorm = out.grad_norm();
    if out.status != BfgsStatus::Converged && gnorm > ACCEPT {
        return Err(Error::non_convergence("equilibrium", out.iterations, gnorm, out.x));
    }
    let allocation = Allocation::from_leading_rows(&out.x, count, n);
    let mut measures = Vec::with_capacity(count);
    let mut value = 0.0;
    for (ev, a) in evs.iter_mut().zip(&allocation.weights) {
        let e = ev.evaluate(&bundle.combine(a))?;
        value += e.value;
        measures.push(e.optimizer_measure);
    }
    let price = bundle.prices_under(measures.last().expect("at least one agent"));
    let foc_residual = measures
        .iter()
        .map(|q| {
            let pi = bundle.prices_under(q);
            inf_norm(&pi.iter().zip(&price).map(|(a, b)| a - b).collect::<Vec<_>>())
        })
        .fold(0.0, f64::max);
    let demand_cfg = SolverConfig {
        gradient_tol: config.gradient_tol.min(1e-11),
        ..*config
    };
    let mut total_demand = vec![0.0; n];
    for (i, (ev, a)) in evs.iter_mut().zip(&allocation.weights).enumerate() {
        let z = demand_with(ev, bundle, &price, Some(a), &demand_cfg).map_err(|e| match e {
            Error::PriceOutsideRange { price, .. } => Error::PriceOutsideRange { agent: i, price },
            other => other,
        })?;
        for (t, v) in total_demand.iter_mut().zip(&z) {
            *t += v;
        }
    }
    let clearing_residual = inf_norm(&total_demand);
    let worst = clearing_residual.max(foc_residual);
    if worst > config.residual_tol {
        return Err(Error::non_convergence("equilibrium residuals", out.iterations, worst, out.x));
    }
    Ok(PepaResult {
        price: PriceVector(price),
        allocation,
        optimizer_measures: measures,
        clearing_residual,
        foc_residual,
        aggregate_value: value,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_market, Claim};

    fn fix(endowment2: Vec<f64>) -> (FiniteMarket, Vec<RiskModel>, Bundle) {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let agents = vec![
            RiskModel::entropic(1.0, Claim::zeros(4), m.full_view()),
            RiskModel::entropic(2.0, Claim(endowment2), m.full_view()),
        ];
        let b = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
        (m, agents, b)
    }

    #[test]
    fn symmetric_market_has_no_trade() {
        let (m, agents, b) = fix(vec![0.0; 4]);
        let r = solve_pepa(&agents, &m, &b, &SolverConfig::default()).unwrap();
        assert!((r.price[0] - 0.5).abs() < 1e-9);
        assert!(r.allocation.max_abs() < 1e-9);
    }

    #[test]
    fn endowed_agent_buys() {
        let (m, agents, b) = fix(vec![0.0, 1.0, 0.0, 1.0]);
        let r = solve_pepa(&agents, &m, &b, &SolverConfig::default()).unwrap();
        assert!(r.allocation.weights[1][0] > 0.1);
        assert!(r.clearing_residual < 1e-6 && r.foc_residual < 1e-6);
    }

    #[test]
    fn redundant_bundle_is_rejected() {
        let (m, agents, _) = fix(vec![0.0; 4]);
        let b = Bundle::new(vec![Claim(vec![1.0, 1.0, -1.0, -1.0])]).unwrap();
        match solve_pepa(&agents, &m, &b, &SolverConfig::default()) {
            Err(Error::AssumptionViolated { assumption, .. }) => {
                assert_eq!(assumption, Assumption::NonRedundancy)
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::lp::{LinearProgram, LpOutcome, Relation, Sense};
use crate::market::FiniteMarket;
use crate::risk::{RiskEvaluator, RiskModel};

use super::{Allocation, Bundle};

const AGREE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Agreeability {
    /// Every agent accepts its trade at `price`: `a_i . p + rho_i(a_i . B) <= 0`.
    Agreeable { price: Vec<f64>, value: f64 },
    /// `lambda >= 0`, `sum lambda_i a_i = 0`, `sum lambda_i rho_i(a_i . B) = value > 0`.
    Refused { lambda: Vec<f64>, value: f64 },
}

impl Agreeability {
    pub fn is_agreeable(&self) -> bool {
        matches!(self, Agreeability::Agreeable { .. })
    }

    /// Optimal value of `min_p max_i (a_i . p + rho_i(a_i . B))`.
    pub fn value(&self) -> f64 {
        match self {
            Agreeability::Agreeable { value, .. } | Agreeability::Refused { value, .. } => *value,
        }
    }
}

fn capital_requirements(
    agents: &[RiskModel],
    market: &FiniteMarket,
    bundle: &Bundle,
    allocation: &Allocation,
) -> Result<Vec<f64>> {
    if allocation.num_agents() != agents.len() {
        return Err(Error::Dimension(format!(
            "allocation has {} rows for {} agents",
            allocation.num_agents(),
            agents.len()
        )));
    }
    if allocation.weights.iter().any(|r| r.len() != bundle.len()) {
        return Err(Error::Dimension("allocation width differs from bundle size".into()));
    }
    let gap = allocation.column_sums().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if gap > Allocation::FEASIBILITY_TOL {
        return Err(Error::validation("allocation", "column sums must vanish"));
    }
    agents
        .iter()
        .zip(&allocation.weights)
        .map(|(agent, a)| Ok(RiskEvaluator::new(agent, market)?.evaluate(&bundle.combine(a))?.value))
        .collect()
}

/// Decides whether some price makes every agent's trade acceptable.
pub fn mutually_agreeable(
    agents: &[RiskModel],
    market: &FiniteMarket,
    bundle: &Bundle,
    allocation: &Allocation,
) -> Result<Agreeability> {
    let rhos = capital_requirements(agents, market, bundle, allocation)?;
    let n = bundle.len();
    let count = agents.len();

    // min t  s.t.  a_i . p - t <= -rho_i,  p and t free
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let mut primal = LinearProgram::new(Sense::Minimize, obj);
    for j in 0..=n {
        primal.set_free(j);
    }
    for (a, r) in allocation.weights.iter().zip(&rhos) {
        let mut c = a.clone();
        c.push(-1.0);
        primal.add(c, Relation::Le, -r);
    }
    let (x, value) = match primal.solve() {
        LpOutcome::Optimal { x, value } => (x, value),
        _ => return Err(Error::non_convergence("agreeability LP", 0, f64::NAN, Vec::new())),
    };
    if value <= AGREE_TOL {
        return Ok(Agreeability::Agreeable {
            price: x[..n].to_vec(),
            value,
        });
    }

    // max sum lambda_i rho_i  s.t.  sum lambda_i a_i = 0, sum lambda_i = 1
    let mut dual = LinearProgram::new(Sense::Maximize, rhos.clone());
    for k in 0..n {
        dual.add(allocation.weights.iter().map(|a| a[k]).collect(), Relation::Eq, 0.0);
    }
    dual.add(vec![1.0; count], Relation::Eq, 1.0);
    let (lambda, dual_value) = dual
        .solve()
        .optimal()
        .ok_or_else(|| Error::non_convergence("agreeability dual LP", 0, value, Vec::new()))?;
    Ok(Agreeability::Refused {
        value: dual_value,
        lambda,
    })
}

/// `max_i (a_i . p + rho_i(a_i . B))`; the allocation is acceptable to all
/// agents at `p` iff this is `<= 0`.
pub fn agreeable_at(
    agents: &[RiskModel],
    market: &FiniteMarket,
    bundle: &Bundle,
    allocation: &Allocation,
    price: &[f64],
) -> Result<f64> {
    let rhos = capital_requirements(agents, market, bundle, allocation)?;
    Ok(allocation
        .weights
        .iter()
        .zip(&rhos)
        .map(|(a, r)| dot(a, price) + r)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_market, Claim};

    #[test]
    fn zero_allocation_is_agreeable() {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let a = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let b = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
        let r = mutually_agreeable(&[a.clone(), a], &m, &b, &Allocation::zeros(2, 1)).unwrap();
        assert!(r.is_agreeable());
    }

    #[test]
    fn pareto_pair_refuses_trade() {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let a1 = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let a2 = RiskModel::entropic(2.0, Claim::zeros(4), m.full_view());
        let b = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
        let alloc = Allocation::new(vec![vec![0.5], vec![-0.5]]).unwrap();
        match mutually_agreeable(&[a1, a2], &m, &b, &alloc).unwrap() {
            Agreeability::Refused { lambda, value } => {
                assert!(value > 0.0);
                assert!((lambda[0] - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

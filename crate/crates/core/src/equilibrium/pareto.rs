use crate::error::Result;
use crate::market::FiniteMarket;
use crate::risk::{RiskEvaluator, RiskModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoCheck {
    pub is_pareto: bool,
    /// The shared optimizer measure at zero, when there is one.
    pub common_measure: Option<Vec<f64>>,
    /// Largest pairwise L1 distance between optimizer measures at zero.
    pub max_gap: f64,
    pub measures: Vec<Vec<f64>>,
}

const GAP_TOL: f64 = 1e-7;

/// Agents are in a Pareto-optimal configuration iff their optimizer measures
/// at zero coincide.
pub fn pareto_check(agents: &[RiskModel], market: &FiniteMarket) -> Result<ParetoCheck> {
    let measures = agents
        .iter()
        .map(|a| Ok(RiskEvaluator::new(a, market)?.measure_at_zero().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut max_gap = 0.0_f64;
    for i in 0..measures.len() {
        for j in i + 1..measures.len() {
            let gap: f64 = measures[i]
                .iter()
                .zip(&measures[j])
                .map(|(a, b)| (a - b).abs())
                .sum();
            max_gap = max_gap.max(gap);
        }
    }
    let is_pareto = max_gap <= GAP_TOL;
    Ok(ParetoCheck {
        is_pareto,
        common_measure: if is_pareto { measures.first().cloned() } else { None },
        max_gap,
        measures,
    })
}

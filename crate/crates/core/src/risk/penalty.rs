use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::market::{FiniteMarket, LP_TOL};

use super::{Preference, RiskEvaluator, RiskModel};

/// Penalty level; `Infinite` outside the agent's martingale polytope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Finite(f64),
    Infinite,
}

impl Penalty {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            Penalty::Finite(v) => Some(v),
            Penalty::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Penalty::Infinite)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyValue {
    pub measure: Vec<f64>,
    pub alpha: Penalty,
}

/// Minimal penalty `alpha(q)` in `rho(B) = max_q E^q[-B] - alpha(q)`.
///
/// Entropic agents: `H(q|P)/gamma + E^q[E] + l(0)` on the view's polytope.
pub fn penalty_alpha(model: &RiskModel, market: &FiniteMarket, q: &[f64]) -> Result<PenaltyValue> {
    PenaltyFunction::new(model, market)?.alpha(q)
}

/// `alpha` for one agent, with `l(0)` computed once.
pub struct PenaltyFunction<'a> {
    ev: RiskEvaluator<'a>,
    market: &'a FiniteMarket,
}

impl<'a> PenaltyFunction<'a> {
    pub fn new(model: &'a RiskModel, market: &'a FiniteMarket) -> Result<Self> {
        Ok(PenaltyFunction {
            ev: RiskEvaluator::new(model, market)?,
            market,
        })
    }

    pub fn alpha(&self, q: &[f64]) -> Result<PenaltyValue> {
        penalty_with(&self.ev, self.market, q)
    }
}

fn penalty_with(ev: &RiskEvaluator<'_>, market: &FiniteMarket, q: &[f64]) -> Result<PenaltyValue> {
    let model = ev.model();
    if q.len() != market.num_states() {
        return Err(Error::Dimension(format!(
            "measure has {} entries for {} states",
            q.len(),
            market.num_states()
        )));
    }
    let total: f64 = q.iter().sum();
    if q.iter().any(|v| *v < 0.0 || v.is_nan()) || (total - 1.0).abs() > LP_TOL {
        return Err(Error::InvalidProbabilities(format!(
            "not a probability vector (sum {total})"
        )));
    }
    let gamma = match model.preference {
        Preference::Entropic { gamma } => gamma,
        Preference::Utility { .. } => {
            return Err(Error::PenaltyUnavailable(
                "utility-based agents have no closed-form penalty".into(),
            ))
        }
    };
    let measure = q.to_vec();
    let off_polytope = market
        .view_increments(&model.view)
        .iter()
        .any(|row| dot(q, row).abs() > LP_TOL * row.iter().fold(1.0_f64, |a, v| a.max(v.abs())));
    if off_polytope {
        return Ok(PenaltyValue {
            measure,
            alpha: Penalty::Infinite,
        });
    }
    let entropy: f64 = q
        .iter()
        .zip(market.probs())
        .filter(|(qw, _)| **qw > 0.0)
        .map(|(qw, pw)| qw * (qw / pw).ln())
        .sum();
    let ell0 = ev.entropic_base().expect("entropic evaluator");
    let alpha = entropy / gamma + dot(q, &model.endowment) + ell0;
    Ok(PenaltyValue {
        measure,
        alpha: Penalty::Finite(alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_market, Claim, MarketView};

    #[test]
    fn zero_at_reference_measure() {
        let m = build_market(vec![0.5, 0.5], vec![]).unwrap();
        let model = RiskModel::entropic(1.0, Claim::zeros(2), MarketView::empty());
        let p = penalty_alpha(&model, &m, &[0.5, 0.5]).unwrap();
        assert_eq!(p.alpha, Penalty::Finite(0.0));
    }

    #[test]
    fn vertex_of_fix_b() {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let model = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let p = penalty_alpha(&model, &m, &[0.5, 0.0, 0.5, 0.0]).unwrap();
        assert!((p.alpha.finite().unwrap() - 2f64.ln()).abs() < 1e-12);
        let off = penalty_alpha(&model, &m, &[0.7, 0.0, 0.3, 0.0]).unwrap();
        assert!(off.alpha.is_infinite());
    }
}

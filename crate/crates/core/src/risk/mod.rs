//! Capital requirements `rho_i`, optimizer measures, penalties,
//! inf-convolution and strict-convexity probing.

mod entropic;
mod infconv;
mod penalty;
mod probe;
mod utility;

pub use infconv::{inf_convolution, InfConvolution};
pub use penalty::{penalty_alpha, Penalty, PenaltyFunction, PenaltyValue};
pub use probe::{strict_convexity_probe, ProbeReport, ProbeSamples, Violation};
pub use utility::Utility;

use crate::equilibrium::Bundle;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::market::{Claim, FiniteMarket, MarketView};

#[derive(Debug, Clone, PartialEq)]
pub enum Preference {
    /// Entropic capital requirement with absolute risk aversion `gamma`.
    Entropic { gamma: f64 },
    /// Utility indifference: the least cash making the position as good as
    /// holding the endowment alone.
    Utility { utility: Utility, initial_wealth: f64 },
}

/// An agent: preferences, endowment and tradable assets.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub preference: Preference,
    pub endowment: Claim,
    pub view: MarketView,
}

impl RiskModel {
    pub fn entropic(gamma: f64, endowment: Claim, view: MarketView) -> Self {
        RiskModel {
            preference: Preference::Entropic { gamma },
            endowment,
            view,
        }
    }

    pub fn utility(utility: Utility, initial_wealth: f64, endowment: Claim, view: MarketView) -> Self {
        RiskModel {
            preference: Preference::Utility {
                utility,
                initial_wealth,
            },
            endowment,
            view,
        }
    }

    pub fn validate(&self, market: &FiniteMarket) -> Result<()> {
        if self.endowment.len() != market.num_states() {
            return Err(Error::Dimension(format!(
                "endowment has {} entries for {} states",
                self.endowment.len(),
                market.num_states()
            )));
        }
        if self.endowment.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("endowment", "non-finite entry"));
        }
        market.validate_view(&self.view)?;
        match &self.preference {
            Preference::Entropic { gamma } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::validation("gamma", format!("must be positive, got {gamma}")));
                }
            }
            Preference::Utility {
                utility,
                initial_wealth,
            } => {
                utility.validate()?;
                if !initial_wealth.is_finite() {
                    return Err(Error::validation("initial_wealth", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// `rho(B)` together with an element of its subdifferential.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEvaluation {
    pub value: f64,
    /// `q*` with `-q*` a subgradient of `rho` at the claim.
    pub optimizer_measure: Vec<f64>,
    /// Hedge taken on top of the agent's optimal hedge at zero.
    pub hedge: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

enum Base {
    Entropic {
        gamma: f64,
        log_p: Vec<f64>,
        ell0: f64,
    },
    Utility {
        utility: Utility,
        wealth0: Vec<f64>,
        u0: f64,
    },
}

/// Evaluates one agent's `rho` repeatedly, caching the value at zero and
/// warm-starting hedges.
pub struct RiskEvaluator<'a> {
    model: &'a RiskModel,
    market: &'a FiniteMarket,
    rows: Vec<&'a [f64]>,
    base: Base,
    theta0: Vec<f64>,
    measure0: Vec<f64>,
    warm: Vec<f64>,
}

impl<'a> RiskEvaluator<'a> {
    pub fn new(model: &'a RiskModel, market: &'a FiniteMarket) -> Result<Self> {
        model.validate(market)?;
        let rows = market.view_increments(&model.view);
        let zero = vec![0.0; rows.len()];
        let (base, theta0, measure0) = match &model.preference {
            Preference::Entropic { gamma } => {
                let log_p: Vec<f64> = market.probs().iter().map(|p| p.ln()).collect();
                let s = entropic::solve(&log_p, &rows, *gamma, &model.endowment, &zero)?;
                (
                    Base::Entropic {
                        gamma: *gamma,
                        log_p,
                        ell0: s.value,
                    },
                    s.theta,
                    s.measure,
                )
            }
            Preference::Utility {
                utility,
                initial_wealth,
            } => {
                let wealth0: Vec<f64> = model.endowment.iter().map(|e| e + initial_wealth).collect();
                let s = utility::maximize(utility, market.probs(), &rows, &wealth0, &zero)?
                    .ok_or_else(|| {
                        Error::DomainViolation(
                            "initial wealth plus endowment is outside the utility domain".into(),
                        )
                    })?;
                let measure = marginal_measure(utility, market.probs(), &s.wealth);
                (
                    Base::Utility {
                        utility: *utility,
                        wealth0,
                        u0: s.value,
                    },
                    s.theta,
                    measure,
                )
            }
        };
        Ok(RiskEvaluator {
            model,
            market,
            rows,
            warm: theta0.clone(),
            base,
            theta0,
            measure0,
        })
    }

    pub fn model(&self) -> &RiskModel {
        self.model
    }

    /// The optimizer measure at zero.
    pub fn measure_at_zero(&self) -> &[f64] {
        &self.measure0
    }

    /// `l(0)` for entropic agents.
    pub fn entropic_base(&self) -> Option<f64> {
        match self.base {
            Base::Entropic { ell0, .. } => Some(ell0),
            Base::Utility { .. } => None,
        }
    }

    pub fn evaluate(&mut self, claim: &[f64]) -> Result<RiskEvaluation> {
        if claim.len() != self.market.num_states() {
            return Err(Error::Dimension(format!(
                "claim has {} entries for {} states",
                claim.len(),
                self.market.num_states()
            )));
        }
        match &self.base {
            Base::Entropic { gamma, log_p, ell0 } => {
                let x: Vec<f64> = self.model.endowment.iter().zip(claim).map(|(e, b)| e + b).collect();
                let s = entropic::solve(log_p, &self.rows, *gamma, &x, &self.warm)?;
                self.warm = s.theta.clone();
                Ok(RiskEvaluation {
                    value: s.value - ell0,
                    optimizer_measure: s.measure,
                    hedge: s.theta.iter().zip(&self.theta0).map(|(a, b)| a - b).collect(),
                    iterations: s.iterations,
                    residual: s.residual,
                })
            }
            Base::Utility { utility, wealth0, u0 } => {
                let (utility, wealth0, u0) = (*utility, wealth0.clone(), *u0);
                self.utility_rho(&utility, &wealth0, u0, claim)
            }
        }
    }

    /// Smallest `m` with `u(W0 + B + m) >= u(W0)`; safeguarded Newton on the
    /// concave increasing map `m -> u(W0 + B + m)`.
    fn utility_rho(&mut self, utility: &Utility, wealth0: &[f64], u0: f64, claim: &[f64]) -> Result<RiskEvaluation> {
        let probs = self.market.probs();
        let bound = claim.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if bound == 0.0 {
            return Ok(RiskEvaluation {
                value: 0.0,
                optimizer_measure: self.measure0.clone(),
                hedge: vec![0.0; self.rows.len()],
                iterations: 0,
                residual: 0.0,
            });
        }
        let (mut lo, mut hi) = (-bound, bound);
        let mut m = (-dot(&self.measure0, claim)).clamp(lo, hi);
        let mut best: Option<(f64, utility::UtilitySolve)> = None;
        let mut total_iter = 0;
        for _ in 0..200 {
            let w: Vec<f64> = wealth0.iter().zip(claim).map(|(a, b)| a + b + m).collect();
            let solved = utility::maximize(utility, probs, &self.rows, &w, &self.warm)?;
            let Some(s) = solved else {
                lo = m;
                m = 0.5 * (lo + hi);
                continue;
            };
            total_iter += s.iterations;
            self.warm = s.theta.clone();
            let phi = s.value - u0;
            let dphi: f64 = probs.iter().zip(&s.wealth).map(|(p, &x)| p * utility.marginal(x)).sum();
            let step = phi / dphi;
            let tol = 1e-14 * m.abs().max(1.0);
            if phi >= 0.0 {
                hi = m;
            } else {
                lo = m;
            }
            let converged = phi == 0.0 || step.abs() <= tol || hi - lo <= tol;
            best = Some((m, s));
            if converged {
                break;
            }
            let newton = m - step;
            m = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        let Some((m, s)) = best else {
            return Err(Error::non_convergence("utility capital requirement", 200, hi - lo, vec![m]));
        };
        Ok(RiskEvaluation {
            value: m,
            optimizer_measure: marginal_measure(utility, probs, &s.wealth),
            hedge: s.theta.iter().zip(&self.theta0).map(|(a, b)| a - b).collect(),
            iterations: total_iter,
            residual: s.residual,
        })
    }

    /// `r(a) = rho(a . B)` and `grad r(a) = -E^{q*}[B]`.
    pub fn r_and_grad(&mut self, bundle: &Bundle, a: &[f64]) -> Result<(f64, Vec<f64>, RiskEvaluation)> {
        let ev = self.evaluate(&bundle.combine(a))?;
        let grad = bundle.claims().iter().map(|b| -dot(&ev.optimizer_measure, b)).collect();
        Ok((ev.value, grad, ev))
    }
}

fn marginal_measure(u: &Utility, probs: &[f64], wealth: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = probs.iter().zip(wealth).map(|(p, &w)| p * u.marginal(w)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// The agent's capital requirement for `claim`.
pub fn rho(model: &RiskModel, market: &FiniteMarket, claim: &[f64]) -> Result<RiskEvaluation> {
    RiskEvaluator::new(model, market)?.evaluate(claim)
}

/// `r(a) = rho(a . B)` and its gradient `-E^{q*}[B]`.
pub fn grad_r(model: &RiskModel, market: &FiniteMarket, bundle: &Bundle, a: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (v, g, _) = RiskEvaluator::new(model, market)?.r_and_grad(bundle, a)?;
    Ok((v, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::build_market;

    fn fix_b() -> FiniteMarket {
        build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap()
    }

    #[test]
    fn fix_a_closed_form() {
        let m = build_market(vec![0.5, 0.5], vec![]).unwrap();
        let model = RiskModel::entropic(1.0, Claim::zeros(2), MarketView::empty());
        let ev = rho(&model, &m, &[1.0, -1.0]).unwrap();
        assert!((ev.value - 1f64.cosh().ln()).abs() < 1e-14);
    }

    #[test]
    fn replication_invariance_fix_b() {
        let m = fix_b();
        let model = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let ev = rho(&model, &m, &[5.0, 5.0, -5.0, -5.0]).unwrap();
        assert!(ev.value.abs() < 1e-12);
    }

    #[test]
    fn cash_invariance_all_kinds() {
        let m = fix_b();
        let models = [
            RiskModel::entropic(1.5, Claim(vec![0.2, -0.1, 0.0, 0.3]), m.full_view()),
            RiskModel::utility(
                Utility::Exponential { gamma: 0.7 },
                1.0,
                Claim(vec![0.0, 1.0, 0.0, 1.0]),
                m.full_view(),
            ),
            RiskModel::utility(
                Utility::Power {
                    exponent: 0.5,
                    lower_bound: 0.0,
                },
                4.0,
                Claim::zeros(4),
                m.full_view(),
            ),
            RiskModel::utility(
                Utility::Power {
                    exponent: -1.0,
                    lower_bound: -1.0,
                },
                3.0,
                Claim(vec![0.5, 0.0, 0.0, 0.5]),
                MarketView::empty(),
            ),
        ];
        let b = [0.7, -0.4, 1.1, 0.2];
        for model in &models {
            let mut ev = RiskEvaluator::new(model, &m).unwrap();
            let r = ev.evaluate(&b).unwrap().value;
            let shifted: Vec<f64> = b.iter().map(|v| v + 0.8).collect();
            let r2 = ev.evaluate(&shifted).unwrap().value;
            assert!((r2 - (r - 0.8)).abs() < 1e-9, "{model:?}: {r} {r2}");
            assert!(ev.evaluate(&[0.0; 4]).unwrap().value.abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_utility_matches_entropic() {
        let m = fix_b();
        let e = Claim(vec![0.0, 1.0, 0.0, 1.0]);
        let ent = RiskModel::entropic(2.0, e.clone(), m.full_view());
        let util = RiskModel::utility(Utility::Exponential { gamma: 2.0 }, 0.3, e, m.full_view());
        let b = [1.0, 0.0, 1.0, 0.0];
        let a = rho(&ent, &m, &b).unwrap();
        let u = rho(&util, &m, &b).unwrap();
        assert!((a.value - u.value).abs() < 1e-10);
        for (x, y) in a.optimizer_measure.iter().zip(&u.optimizer_measure) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_at_zero_fix_b() {
        let m = fix_b();
        let model = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let bundle = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
        let (r, g) = grad_r(&model, &m, &bundle, &[0.0]).unwrap();
        assert!(r.abs() < 1e-14);
        assert!((g[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn power_domain_violation() {
        let m = build_market(vec![0.5, 0.5], vec![]).unwrap();
        let model = RiskModel::utility(
            Utility::Power {
                exponent: 0.5,
                lower_bound: 0.0,
            },
            -1.0,
            Claim::zeros(2),
            MarketView::empty(),
        );
        assert!(matches!(rho(&model, &m, &[0.0, 0.0]), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn invalid_power_exponent() {
        let m = build_market(vec![0.5, 0.5], vec![]).unwrap();
        let model = RiskModel::utility(
            Utility::Power {
                exponent: 1.5,
                lower_bound: 0.0,
            },
            1.0,
            Claim::zeros(2),
            MarketView::empty(),
        );
        assert!(matches!(rho(&model, &m, &[0.0, 0.0]), Err(Error::Validation { .. })));
    }
}

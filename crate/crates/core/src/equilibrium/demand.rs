use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::market::{strictly_positive_point, FiniteMarket, LP_TOL};
use crate::optim::{minimize, BfgsOptions, BfgsStatus};
use crate::risk::{RiskEvaluator, RiskModel};

use super::{Bundle, SolverConfig};

const ACCEPT: f64 = 1e-8;

/// Whether some strictly positive martingale measure of the agent prices the
/// bundle at `p`, i.e. whether a demand exists.
pub fn price_in_range(model: &RiskModel, market: &FiniteMarket, bundle: &Bundle, p: &[f64]) -> Result<bool> {
    if p.len() != bundle.len() {
        return Err(Error::Dimension(format!(
            "price has {} entries for {} claims",
            p.len(),
            bundle.len()
        )));
    }
    let extra: Vec<(&[f64], f64)> = bundle
        .claims()
        .iter()
        .map(|c| &c[..])
        .zip(p.iter().copied())
        .collect();
    Ok(matches!(
        strictly_positive_point(market, &model.view, &extra),
        Some((_, t)) if t > LP_TOL
    ))
}

/// The agent's demand: the unique minimizer of `rho(a . B) + a . p`.
pub fn demand(model: &RiskModel, market: &FiniteMarket, bundle: &Bundle, p: &[f64]) -> Result<Vec<f64>> {
    demand_from(model, market, bundle, p, None, &SolverConfig::default())
}

pub fn demand_from(
    model: &RiskModel,
    market: &FiniteMarket,
    bundle: &Bundle,
    p: &[f64],
    start: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    if !price_in_range(model, market, bundle, p)? {
        return Err(Error::PriceOutsideRange {
            agent: 0,
            price: p.to_vec(),
        });
    }
    let mut ev = RiskEvaluator::new(model, market)?;
    demand_with(&mut ev, bundle, p, start, config)
}

pub(crate) fn demand_with(
    ev: &mut RiskEvaluator<'_>,
    bundle: &Bundle,
    p: &[f64],
    start: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = bundle.len();
    let zero = vec![0.0; n];
    let x0 = start.unwrap_or(&zero);
    let opts = BfgsOptions {
        grad_tol: config.gradient_tol,
        max_iterations: config.max_iterations,
        divergence_bound: config.divergence_bound,
    };
    let out = minimize(
        |a| {
            let (r, g, _) = ev.r_and_grad(bundle, a)?;
            let grad = g.iter().zip(p).map(|(x, y)| x + y).collect();
            Ok((r + dot(a, p), grad))
        },
        x0,
        &opts,
    )?;
    let gnorm = out.grad_norm();
    match out.status {
        BfgsStatus::Converged => Ok(out.x),
        // Linear growth of the objective: the slope stays away from zero.
        BfgsStatus::Diverged if gnorm > ACCEPT => Err(Error::PriceOutsideRange {
            agent: 0,
            price: p.to_vec(),
        }),
        _ if gnorm <= ACCEPT => Ok(out.x),
        _ => Err(Error::non_convergence("demand", out.iterations, gnorm, out.x)),
    }
}

/// `(Z(p1) - Z(p2)) . (p1 - p2)`; negative for distinct prices.
pub fn demand_monotonicity_check(
    model: &RiskModel,
    market: &FiniteMarket,
    bundle: &Bundle,
    p1: &[f64],
    p2: &[f64],
) -> Result<f64> {
    let z1 = demand(model, market, bundle, p1)?;
    let z2 = demand(model, market, bundle, p2)?;
    Ok(z1
        .iter()
        .zip(&z2)
        .zip(p1.iter().zip(p2))
        .map(|((a, b), (x, y))| (a - b) * (x - y))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_market, Claim};

    fn setup() -> (FiniteMarket, RiskModel, Bundle) {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let model = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let b = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
        (m, model, b)
    }

    #[test]
    fn zero_demand_at_marginal_price() {
        let (m, model, b) = setup();
        let a = demand(&model, &m, &b, &[0.5]).unwrap();
        assert!(a[0].abs() < 1e-9);
    }

    #[test]
    fn boundary_price_is_outside_range() {
        let (m, model, b) = setup();
        assert!(matches!(
            demand(&model, &m, &b, &[1.0]),
            Err(Error::PriceOutsideRange { .. })
        ));
    }

    #[test]
    fn demand_decreases_in_price() {
        let (m, model, b) = setup();
        let v = demand_monotonicity_check(&model, &m, &b, &[0.45], &[0.55]).unwrap();
        assert!(v < 0.0);
        assert_eq!(demand_monotonicity_check(&model, &m, &b, &[0.3], &[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn divergence_detector_without_precheck() {
        let (m, model, b) = setup();
        let mut ev = RiskEvaluator::new(&model, &m).unwrap();
        let cfg = SolverConfig {
            divergence_bound: 1e3,
            ..Default::default()
        };
        assert!(matches!(
            demand_with(&mut ev, &b, &[1.2], None, &cfg),
            Err(Error::PriceOutsideRange { .. })
        ));
    }
}

use crate::error::{Error, Result};
use crate::market::{strictly_positive_point, Claim, FiniteMarket, MarketView};
use crate::optim::{inf_norm, minimize, BfgsOptions, BfgsStatus};

use super::{RiskEvaluator, RiskModel};

/// Optimal risk sharing of a claim among several agents.
#[derive(Debug, Clone, PartialEq)]
pub struct InfConvolution {
    pub value: f64,
    pub split: Vec<Claim>,
    /// Common optimizer measure of the parts (the last agent's).
    pub measure: Vec<f64>,
    /// `max_i |q_i - q_I|_inf` at the optimum.
    pub residual: f64,
    pub iterations: usize,
}

const ACCEPT: f64 = 1e-8;

/// `inf { sum_i rho_i(B_i) : sum_i B_i = claim }`.
pub fn inf_convolution(models: &[RiskModel], market: &FiniteMarket, claim: &[f64]) -> Result<InfConvolution> {
    if models.is_empty() {
        return Err(Error::InvalidModel("no agents".into()));
    }
    let n = market.num_states();
    if claim.len() != n {
        return Err(Error::Dimension(format!("claim has {} entries for {n} states", claim.len())));
    }
    let union = MarketView::union(models.iter().map(|m| &m.view));
    if strictly_positive_point(market, &union, &[]).is_none() {
        return Err(Error::EmptyIntersection);
    }
    let mut evs = models
        .iter()
        .map(|m| RiskEvaluator::new(m, market))
        .collect::<Result<Vec<_>>>()?;
    let parts = models.len();
    let share = 1.0 / parts as f64;
    let x0: Vec<f64> = (0..(parts - 1) * n).map(|k| claim[k % n] * share).collect();

    let split_of = |x: &[f64]| -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = x.chunks(n).map(|c| c.to_vec()).collect();
        let last: Vec<f64> = (0..n)
            .map(|w| claim[w] - out.iter().map(|c| c[w]).sum::<f64>())
            .collect();
        out.push(last);
        out
    };

    let mut measures: Vec<Vec<f64>> = Vec::new();
    let opts = BfgsOptions {
        grad_tol: 1e-11,
        max_iterations: 2000,
        divergence_bound: 1e6 * (1.0 + claim.iter().fold(0.0_f64, |a, v| a.max(v.abs()))),
    };
    let outcome = minimize(
        |x| {
            let split = split_of(x);
            let mut total = 0.0;
            let mut qs = Vec::with_capacity(parts);
            for (ev, b) in evs.iter_mut().zip(&split) {
                let e = ev.evaluate(b)?;
                total += e.value;
                qs.push(e.optimizer_measure);
            }
            let q_last = qs.last().expect("at least one agent").clone();
            let grad = qs[..parts - 1]
                .iter()
                .flat_map(|q| q.iter().zip(&q_last).map(|(a, b)| b - a).collect::<Vec<_>>())
                .collect();
            measures = qs;
            Ok((total, grad))
        },
        &x0,
        &opts,
    )?;
    let residual = outcome.grad_norm();
    if outcome.status != BfgsStatus::Converged && residual > ACCEPT {
        return Err(Error::non_convergence("inf-convolution", outcome.iterations, residual, outcome.x));
    }
    let split = split_of(&outcome.x);
    let mut value = 0.0;
    for (k, (ev, b)) in evs.iter_mut().zip(&split).enumerate() {
        let e = ev.evaluate(b)?;
        value += e.value;
        measures[k] = e.optimizer_measure;
    }
    Ok(InfConvolution {
        value,
        split: split.into_iter().map(Claim).collect(),
        measure: measures.pop().expect("at least one agent"),
        residual: inf_norm(&outcome.grad),
        iterations: outcome.iterations,
    })
}

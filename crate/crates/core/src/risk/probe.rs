use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibrium::Bundle;
use crate::error::Result;
use crate::market::{check_non_redundancy, replicable_split, FiniteMarket, MartingalePolytope};

use super::{RiskEvaluator, RiskModel};

/// Pairs `(a, delta)` at which midpoint convexity of `a -> rho(a . B)` is tested.
#[derive(Debug, Clone)]
pub enum ProbeSamples {
    Pairs(Vec<(Vec<f64>, Vec<f64>)>),
    /// Uniform pairs in `[-radius, radius]^n`.
    Random { count: usize, radius: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub a: Vec<f64>,
    pub delta: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub pairs_tested: usize,
    /// Smallest `(rho(a)+rho(delta))/2 - rho((a+delta)/2)` over pairs whose
    /// difference is not replicable.
    pub min_margin: f64,
    /// Same, divided by `|a - delta|^2`.
    pub min_normalized_margin: f64,
    pub violations: Vec<Violation>,
    /// Some bundle combination is replicable for the agent, so `r` is affine
    /// along it.
    pub equality_direction: Option<Vec<f64>>,
}

impl ProbeReport {
    pub fn equality_direction_detected(&self) -> bool {
        self.equality_direction.is_some()
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.equality_direction.is_none()
    }
}

const EQUALITY_TOL: f64 = 1e-9;

pub fn strict_convexity_probe(
    model: &RiskModel,
    market: &FiniteMarket,
    bundle: &Bundle,
    samples: &ProbeSamples,
) -> Result<ProbeReport> {
    let mut ev = RiskEvaluator::new(model, market)?;
    let n = bundle.len();
    let mut pairs = match samples {
        ProbeSamples::Pairs(p) => p.clone(),
        ProbeSamples::Random { count, radius, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..*count)
                .map(|_| {
                    let a = (0..n).map(|_| rng.gen_range(-*radius..=*radius)).collect();
                    let d = (0..n).map(|_| rng.gen_range(-*radius..=*radius)).collect();
                    (a, d)
                })
                .collect()
        }
    };
    let poly = MartingalePolytope::for_view(&model.view);
    let nr = check_non_redundancy(market, bundle, &poly);
    if let Some(w) = &nr.witness {
        pairs.push((vec![0.0; n], w.clone()));
    }

    let mut report = ProbeReport {
        pairs_tested: 0,
        min_margin: f64::INFINITY,
        min_normalized_margin: f64::INFINITY,
        violations: Vec::new(),
        equality_direction: None,
    };
    for (a, d) in pairs {
        let diff: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x - y).collect();
        let dist2: f64 = diff.iter().map(|v| v * v).sum();
        if dist2 == 0.0 {
            continue;
        }
        report.pairs_tested += 1;
        let mid: Vec<f64> = a.iter().zip(&d).map(|(x, y)| 0.5 * (x + y)).collect();
        let ra = ev.evaluate(&bundle.combine(&a))?.value;
        let rd = ev.evaluate(&bundle.combine(&d))?.value;
        let rm = ev.evaluate(&bundle.combine(&mid))?.value;
        let margin = 0.5 * (ra + rd) - rm;
        let replicable = replicable_split(market, &model.view, &bundle.combine(&diff)).is_replicable();
        if replicable {
            if report.equality_direction.is_none() {
                report.equality_direction = Some(diff.clone());
            }
            if margin < -EQUALITY_TOL {
                report.violations.push(Violation { a, delta: d, margin });
            }
            continue;
        }
        let noise = 1e-12 * (1.0 + ra.abs().max(rd.abs()));
        if margin <= noise {
            report.violations.push(Violation {
                a: a.clone(),
                delta: d.clone(),
                margin,
            });
        }
        report.min_margin = report.min_margin.min(margin);
        report.min_normalized_margin = report.min_normalized_margin.min(margin / dist2);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_market, Claim};

    #[test]
    fn fix_b_midpoint_is_strict() {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let model = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let bundle = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
        let rep = strict_convexity_probe(
            &model,
            &m,
            &bundle,
            &ProbeSamples::Pairs(vec![(vec![0.0], vec![1.0])]),
        )
        .unwrap();
        assert!(rep.passed());
        assert!(rep.min_margin > 0.0);
    }

    #[test]
    fn replicable_row_is_flagged() {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let model = RiskModel::entropic(1.0, Claim::zeros(4), m.full_view());
        let bundle = Bundle::new(vec![Claim(vec![1.0, 1.0, -1.0, -1.0])]).unwrap();
        let rep = strict_convexity_probe(
            &model,
            &m,
            &bundle,
            &ProbeSamples::Random {
                count: 5,
                radius: 1.0,
                seed: 1,
            },
        )
        .unwrap();
        assert!(rep.equality_direction_detected());
        assert!(!rep.passed());
    }
}

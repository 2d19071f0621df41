//! Perturbation families of agents and the sweep checking that equilibria of
//! converging preferences converge.

use rayon::prelude::*;

use crate::equilibrium::{check_assumptions, solve_pepa, Bundle, PepaResult, SolverConfig};
use crate::error::{Error, Result};
use crate::market::FiniteMarket;
use crate::risk::{Preference, RiskEvaluator, RiskModel};

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    /// No perturbation.
    Constant,
    /// Risk aversion scaled by `1 + w`.
    Gamma,
    /// Endowments scaled by `1 - w`.
    Endowment,
    /// Reference probabilities `(1 - w) P + w R`.
    Probs { target: Vec<f64> },
    /// Initial wealth of utility agents scaled by `1 + w`.
    Wealth,
}

impl FamilyKind {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Constant => "constant",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Endowment => "endowment",
            FamilyKind::Probs { .. } => "probs",
            FamilyKind::Wealth => "wealth",
        }
    }
}

/// A sequence of agent sets converging to `base` as `weights[m] -> 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationFamily {
    pub kind: FamilyKind,
    pub base: Vec<RiskModel>,
    pub weights: Vec<f64>,
}

/// `R_w` proportional to `w + 1`; differs from uniform so that mixing
/// uniform references still moves them.
pub fn ramp_distribution(states: usize) -> Vec<f64> {
    let total = (states * (states + 1)) as f64 / 2.0;
    (1..=states).map(|k| k as f64 / total).collect()
}

impl PerturbationFamily {
    /// Weights `2^-m` for `m = 0..length`.
    pub fn geometric(kind: FamilyKind, base: Vec<RiskModel>, length: usize) -> Self {
        PerturbationFamily {
            kind,
            base,
            weights: (0..length).map(|m| 0.5_f64.powi(m as i32)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Market and agents at schedule index `m`.
    pub fn at(&self, market: &FiniteMarket, m: usize) -> Result<(FiniteMarket, Vec<RiskModel>)> {
        let w = *self
            .weights
            .get(m)
            .ok_or_else(|| Error::validation("schedule", format!("index {m} out of range")))?;
        self.at_weight(market, w)
    }

    pub fn at_weight(&self, market: &FiniteMarket, w: f64) -> Result<(FiniteMarket, Vec<RiskModel>)> {
        let mut agents = self.base.clone();
        let mut market = market.clone();
        match &self.kind {
            FamilyKind::Constant => {}
            FamilyKind::Gamma => {
                for a in &mut agents {
                    a.preference = match &a.preference {
                        Preference::Entropic { gamma } => Preference::Entropic {
                            gamma: gamma * (1.0 + w),
                        },
                        Preference::Utility {
                            utility,
                            initial_wealth,
                        } => Preference::Utility {
                            utility: utility.with_risk_aversion_scaled(1.0 + w),
                            initial_wealth: *initial_wealth,
                        },
                    };
                }
            }
            FamilyKind::Endowment => {
                for a in &mut agents {
                    a.endowment = a.endowment.scaled(1.0 - w);
                }
            }
            FamilyKind::Probs { target } => {
                if target.len() != market.num_states() {
                    return Err(Error::Dimension("probability target has the wrong length".into()));
                }
                let mixed: Vec<f64> = market
                    .probs()
                    .iter()
                    .zip(target)
                    .map(|(p, r)| (1.0 - w) * p + w * r)
                    .collect();
                let s: f64 = mixed.iter().sum();
                market = market.with_probs(mixed.into_iter().map(|v| v / s).collect())?;
            }
            FamilyKind::Wealth => {
                for a in &mut agents {
                    if let Preference::Utility { initial_wealth, .. } = &mut a.preference {
                        *initial_wealth *= 1.0 + w;
                    }
                }
            }
        }
        Ok((market, agents))
    }
}

/// `max_grid |r_i^(m)(a) - r_i(a)|` per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseGap {
    pub m: usize,
    pub per_agent: Vec<f64>,
}

impl PointwiseGap {
    pub fn max(&self) -> f64 {
        self.per_agent.iter().copied().fold(0.0, f64::max)
    }
}

fn r_values(agents: &[RiskModel], market: &FiniteMarket, bundle: &Bundle, grid: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    agents
        .iter()
        .map(|agent| {
            let mut ev = RiskEvaluator::new(agent, market)?;
            grid.iter()
                .map(|a| Ok(ev.evaluate(&bundle.combine(a))?.value))
                .collect()
        })
        .collect()
}

fn gaps(base: &[Vec<f64>], other: &[Vec<f64>]) -> Vec<f64> {
    base.iter()
        .zip(other)
        .map(|(x, y)| x.iter().zip(y).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
        .collect()
}

pub fn pointwise_convergence_check(
    family: &PerturbationFamily,
    market: &FiniteMarket,
    bundle: &Bundle,
    grid: &[Vec<f64>],
) -> Result<Vec<PointwiseGap>> {
    let base = r_values(&family.base, market, bundle, grid)?;
    (0..family.len())
        .into_par_iter()
        .map(|m| {
            let (mk, agents) = family.at(market, m)?;
            let vals = r_values(&agents, &mk, bundle, grid)?;
            Ok(PointwiseGap {
                m,
                per_agent: gaps(&base, &vals),
            })
        })
        .collect()
}

/// Allocation points in the box `center +- radius`: a full 5-point lattice
/// for up to three claims, axis points beyond.
pub fn box_grid(centers: &[Vec<f64>], radius: f64) -> Vec<Vec<f64>> {
    let offsets = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut out = Vec::new();
    for c in centers {
        let n = c.len();
        if n <= 3 {
            let total = offsets.len().pow(n as u32);
            for mut k in 0..total {
                let mut p = c.clone();
                for x in p.iter_mut() {
                    *x += radius * offsets[k % offsets.len()];
                    k /= offsets.len();
                }
                out.push(p);
            }
        } else {
            out.push(c.clone());
            for j in 0..n {
                for o in offsets {
                    let mut p = c.clone();
                    p[j] += radius * o;
                    out.push(p);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub weight: f64,
    pub price: Vec<f64>,
    /// Row-major `I x n`.
    pub allocation: Vec<f64>,
    pub price_gap: f64,
    pub alloc_gap: f64,
    /// Pointwise gap of the `r_i` on a box around the limit allocation.
    pub r_gap: f64,
    /// `|f^(m)(a^(m)) - f(a)|` for the aggregate objective.
    pub value_gap: f64,
    pub min_normalized_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub family: String,
    pub rows: Vec<SweepRow>,
    pub limit: PepaResult,
    /// `2 p^(M) - p^(M-1)`; the geometric schedule halves the weight per step.
    pub extrapolated_price: Vec<f64>,
    /// Smallest normalized midpoint-convexity margin across the family.
    pub min_normalized_margin: f64,
}

impl SweepReport {
    /// Whether price and allocation gaps are non-increasing from row `from`
    /// on, up to `floor`.
    pub fn tails_decrease(&self, from: usize, floor: f64) -> bool {
        self.rows.windows(2).filter(|w| w[0].m >= from).all(|w| {
            w[1].price_gap <= w[0].price_gap + floor && w[1].alloc_gap <= w[0].alloc_gap + floor
        })
    }

    pub fn extrapolation_gap(&self) -> f64 {
        self.extrapolated_price
            .iter()
            .zip(self.limit.price.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn last(&self) -> Option<&SweepRow> {
        self.rows.last()
    }
}

pub fn run_stability_sweep(
    family: &PerturbationFamily,
    market: &FiniteMarket,
    bundle: &Bundle,
    config: &SolverConfig,
) -> Result<SweepReport> {
    let base_margin = check_assumptions(&family.base, market, bundle)?;
    let limit = solve_pepa(&family.base, market, bundle, config)?;
    let grid = box_grid(&limit.allocation.weights, 1.0);
    let base_r = r_values(&family.base, market, bundle, &grid)?;

    let rows = (0..family.len())
        .into_par_iter()
        .map(|m| -> Result<SweepRow> {
            let tag = |e: Error| match e {
                Error::AssumptionViolated { assumption, detail, .. } => Error::AssumptionViolated {
                    assumption,
                    detail,
                    at_index: Some(m),
                },
                other => other,
            };
            let (mk, agents) = family.at(market, m).map_err(tag)?;
            let margin = check_assumptions(&agents, &mk, bundle).map_err(tag)?;
            let res = solve_pepa(&agents, &mk, bundle, config).map_err(tag)?;
            let vals = r_values(&agents, &mk, bundle, &grid)?;
            Ok(SweepRow {
                m,
                weight: family.weights[m],
                price_gap: res.price.distance(&limit.price),
                alloc_gap: res.allocation.distance(&limit.allocation),
                r_gap: gaps(&base_r, &vals).into_iter().fold(0.0, f64::max),
                value_gap: (res.aggregate_value - limit.aggregate_value).abs(),
                allocation: res.allocation.weights.iter().flatten().copied().collect(),
                price: res.price.0,
                min_normalized_margin: margin,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let extrapolated_price = match rows.len() {
        0 => limit.price.0.clone(),
        1 => rows[0].price.clone(),
        k => rows[k - 1]
            .price
            .iter()
            .zip(&rows[k - 2].price)
            .map(|(a, b)| 2.0 * a - b)
            .collect(),
    };
    let min_normalized_margin = rows
        .iter()
        .map(|r| r.min_normalized_margin)
        .fold(base_margin, f64::min);
    Ok(SweepReport {
        family: family.kind.name().to_string(),
        rows,
        limit,
        extrapolated_price,
        min_normalized_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_market, Claim};

    fn fix_c() -> (FiniteMarket, Vec<RiskModel>, Bundle) {
        let m = build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap();
        let agents = vec![
            RiskModel::entropic(1.0, Claim::zeros(4), m.full_view()),
            RiskModel::entropic(2.0, Claim(vec![0.0, 1.0, 0.0, 1.0]), m.full_view()),
        ];
        let b = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
        (m, agents, b)
    }

    #[test]
    fn constant_family_has_zero_gaps() {
        let (m, agents, b) = fix_c();
        let fam = PerturbationFamily::geometric(FamilyKind::Constant, agents, 3);
        let rep = run_stability_sweep(&fam, &m, &b, &SolverConfig::default()).unwrap();
        for r in &rep.rows {
            assert!(r.price_gap < 1e-9 && r.alloc_gap < 1e-9 && r.r_gap == 0.0);
        }
    }

    #[test]
    fn ramp_is_a_distribution() {
        let r = ramp_distribution(4);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }
}

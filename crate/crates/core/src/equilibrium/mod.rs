//! Demand, partial-equilibrium price-allocations, Pareto configurations and
//! mutual agreeability.

mod agree;
mod demand;
mod pareto;
mod pepa;

pub use agree::{agreeable_at, mutually_agreeable, Agreeability};
pub use demand::{demand, demand_from, demand_monotonicity_check, price_in_range};
pub use pareto::{pareto_check, ParetoCheck};
pub use pepa::{check_assumptions, solve_pepa, solve_pepa_from};

use crate::error::{Error, Result};
use crate::market::Claim;

/// The claims being traded, one row per claim.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    claims: Vec<Claim>,
}

impl Bundle {
    pub fn new(claims: Vec<Claim>) -> Result<Self> {
        let Some(first) = claims.first() else {
            return Err(Error::validation("bundle", "needs at least one claim"));
        };
        let n = first.len();
        if claims.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("bundle claims have different lengths".into()));
        }
        if claims.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::validation("bundle", "non-finite payoff"));
        }
        Ok(Bundle { claims })
    }

    /// Number of claims `n`.
    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.claims[0].len()
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    /// `a . B`.
    pub fn combine(&self, a: &[f64]) -> Claim {
        let mut out = vec![0.0; self.num_states()];
        for (c, &w) in self.claims.iter().zip(a) {
            for (o, v) in out.iter_mut().zip(c.iter()) {
                *o += w * v;
            }
        }
        Claim(out)
    }

    /// `E^q[B]` per claim.
    pub fn prices_under(&self, q: &[f64]) -> Vec<f64> {
        self.claims
            .iter()
            .map(|c| c.iter().zip(q).map(|(x, y)| x * y).sum())
            .collect()
    }
}

/// Holdings of the bundle, one row per agent; columns sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub weights: Vec<Vec<f64>>,
}

impl Allocation {
    pub const FEASIBILITY_TOL: f64 = 1e-9;

    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        let a = Allocation { weights };
        let n = a.weights.first().map_or(0, |r| r.len());
        if a.weights.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("allocation rows have different lengths".into()));
        }
        let gap = a.column_sums().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gap > Self::FEASIBILITY_TOL {
            return Err(Error::validation(
                "allocation",
                format!("column sums must vanish, max |sum| = {gap:e}"),
            ));
        }
        Ok(a)
    }

    pub fn zeros(agents: usize, n: usize) -> Self {
        Allocation {
            weights: vec![vec![0.0; n]; agents],
        }
    }

    /// Builds a feasible allocation from the first `I-1` rows.
    pub fn from_leading_rows(rows: &[f64], agents: usize, n: usize) -> Self {
        let mut weights: Vec<Vec<f64>> = rows.chunks(n).map(|c| c.to_vec()).collect();
        let last = (0..n).map(|k| -weights.iter().map(|r| r[k]).sum::<f64>()).collect();
        weights.push(last);
        debug_assert_eq!(weights.len(), agents);
        Allocation { weights }
    }

    pub fn num_agents(&self) -> usize {
        self.weights.len()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.weights.first().map_or(0, |r| r.len());
        (0..n).map(|k| self.weights.iter().map(|r| r[k]).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Allocation {
        Allocation {
            weights: self
                .weights
                .iter()
                .map(|r| r.iter().map(|v| v * s).collect())
                .collect(),
        }
    }

    pub fn distance(&self, other: &Allocation) -> f64 {
        self.weights
            .iter()
            .flatten()
            .zip(other.weights.iter().flatten())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Numeraire units per unit of each claim.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(pub Vec<f64>);

impl PriceVector {
    pub fn distance(&self, other: &PriceVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl std::ops::Deref for PriceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PepaResult {
    pub price: PriceVector,
    pub allocation: Allocation,
    pub optimizer_measures: Vec<Vec<f64>>,
    /// `|sum_i Z_i(p)|_inf`, demands recomputed at the price.
    pub clearing_residual: f64,
    /// `max_i |E^{q_i}[B] - p|_inf`.
    pub foc_residual: f64,
    /// Minimal value of the aggregate objective.
    pub aggregate_value: f64,
    pub iterations: usize,
}

/// Numerical controls shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Gradient tolerance of the quasi-Newton solvers.
    pub gradient_tol: f64,
    /// Bound on clearing and first-order residuals.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Iterates beyond this norm signal a price outside the demand range.
    pub divergence_bound: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gradient_tol: 1e-10,
            residual_tol: 1e-6,
            max_iterations: 500,
            divergence_bound: 1e6,
        }
    }
}

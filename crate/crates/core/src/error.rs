use std::fmt;

use thiserror::Error;

/// Standing assumptions checked before equilibrium or stability computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// A strictly positive martingale measure exists for the whole market.
    NoArbitrage,
    /// The agents' martingale polytopes have a common point.
    NonEmptyIntersection,
    /// No nonzero combination of the bundle has a constant price over the
    /// common martingale polytope.
    NonRedundancy,
    /// `a -> rho(a . B)` is strictly convex for every agent.
    StrictConvexity,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::NoArbitrage => "no-arbitrage (no equivalent martingale measure)",
            Assumption::NonEmptyIntersection => "non-empty intersection of martingale polytopes",
            Assumption::NonRedundancy => "non-redundancy",
            Assumption::StrictConvexity => "strict convexity with respect to the bundle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no equivalent martingale measure: arbitrage strategy {strategy:?}")]
    ArbitrageDetected { strategy: Vec<f64> },

    #[error("martingale polytope is empty")]
    InfeasiblePolytope,

    #[error("martingale polytopes of the agents do not intersect")]
    EmptyIntersection,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("wealth leaves the utility domain for every hedge: {0}")]
    DomainViolation(String),

    #[error("{context} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("price {price:?} lies outside the demand range of agent {agent}")]
    PriceOutsideRange { agent: usize, price: Vec<f64> },

    #[error("{assumption} assumption violated{}: {detail}", at_index.map(|m| format!(" at index {m}")).unwrap_or_default())]
    AssumptionViolated {
        assumption: Assumption,
        detail: String,
        at_index: Option<usize>,
    },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("grid minimum lies on the boundary of the search box")]
    MinimumOnBoundary,

    #[error("penalty function has no closed form for this model: {0}")]
    PenaltyUnavailable(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation failed for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn non_convergence(
        context: &'static str,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    ) -> Self {
        Error::NonConvergence {
            context,
            iterations,
            residual,
            last_iterate,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn assumption(assumption: Assumption, detail: impl Into<String>) -> Self {
        Error::AssumptionViolated {
            assumption,
            detail: detail.into(),
            at_index: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

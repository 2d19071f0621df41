//! Expected-utility hedging: `u(W0) = sup_theta E^P[U(W0 + theta . dS)]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dot, pinv_solve};
use crate::lp::{LinearProgram, Relation, Sense};

const MAX_NEWTON: usize = 200;

/// A strictly increasing, strictly concave utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    /// `U(w) = -exp(-gamma w) / gamma`.
    Exponential { gamma: f64 },
    /// `U(w) = (w - a)^p / p` on `w > a`, with `p < 1`, `p != 0`.
    Power { exponent: f64, lower_bound: f64 },
}

impl Utility {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Utility::Exponential { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::validation("gamma", format!("must be positive, got {gamma}")),
            ),
            Utility::Power { exponent, lower_bound } => {
                if !(exponent < 1.0 && exponent != 0.0 && exponent.is_finite()) {
                    return Err(Error::validation(
                        "exponent",
                        format!("power exponent must satisfy p < 1, p != 0, got {exponent}"),
                    ));
                }
                if !lower_bound.is_finite() {
                    return Err(Error::validation("lower_bound", "must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn lower_bound(&self) -> Option<f64> {
        match *self {
            Utility::Exponential { .. } => None,
            Utility::Power { lower_bound, .. } => Some(lower_bound),
        }
    }

    pub fn in_domain(&self, w: f64) -> bool {
        match self.lower_bound() {
            Some(a) => w > a,
            None => w.is_finite(),
        }
    }

    pub fn value(&self, w: f64) -> f64 {
        match *self {
            Utility::Exponential { gamma } => -(-gamma * w).exp() / gamma,
            Utility::Power { exponent: p, lower_bound: a } => {
                if w > a {
                    (w - a).powf(p) / p
                } else if p > 0.0 && w == a {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn marginal(&self, w: f64) -> f64 {
        match *self {
            Utility::Exponential { gamma } => (-gamma * w).exp(),
            Utility::Power { exponent: p, lower_bound: a } => (w - a).powf(p - 1.0),
        }
    }

    pub fn curvature(&self, w: f64) -> f64 {
        match *self {
            Utility::Exponential { gamma } => -gamma * (-gamma * w).exp(),
            Utility::Power { exponent: p, lower_bound: a } => (p - 1.0) * (w - a).powf(p - 2.0),
        }
    }

    /// Multiplies the risk aversion by `factor`: `gamma` for the exponential
    /// family, `1 - p` for the power family.
    pub fn with_risk_aversion_scaled(&self, factor: f64) -> Utility {
        match *self {
            Utility::Exponential { gamma } => Utility::Exponential {
                gamma: gamma * factor,
            },
            Utility::Power { exponent, lower_bound } => Utility::Power {
                exponent: 1.0 - (1.0 - exponent) * factor,
                lower_bound,
            },
        }
    }
}

pub(crate) struct UtilitySolve {
    pub value: f64,
    pub theta: Vec<f64>,
    pub wealth: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn wealth(rows: &[&[f64]], w0: &[f64], theta: &[f64]) -> Vec<f64> {
    (0..w0.len())
        .map(|w| w0[w] + rows.iter().zip(theta).map(|(r, t)| t * r[w]).sum::<f64>())
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// A hedge keeping wealth strictly inside the domain, if any exists.
fn feasible_start(u: &Utility, rows: &[&[f64]], w0: &[f64], theta0: &[f64]) -> Option<Vec<f64>> {
    if wealth(rows, w0, theta0).iter().all(|&w| u.in_domain(w)) {
        return Some(theta0.to_vec());
    }
    let zero = vec![0.0; rows.len()];
    if wealth(rows, w0, &zero).iter().all(|&w| u.in_domain(w)) {
        return Some(zero);
    }
    let a = u.lower_bound()?;
    // max t  s.t.  w0 + theta . dS >= a + t, with t capped to keep the
    // start near the boundary's scale.
    let d = rows.len();
    let mut obj = vec![0.0; d + 1];
    obj[d] = 1.0;
    let mut lp = LinearProgram::new(Sense::Maximize, obj);
    for j in 0..=d {
        lp.set_free(j);
    }
    for w in 0..w0.len() {
        let mut c: Vec<f64> = rows.iter().map(|r| r[w]).collect();
        c.push(-1.0);
        lp.add(c, Relation::Ge, a - w0[w]);
    }
    let cap = w0.iter().fold(1.0_f64, |m, v| m.max((v - a).abs()));
    let mut c = vec![0.0; d + 1];
    c[d] = 1.0;
    lp.add(c, Relation::Le, cap);
    let (x, t) = lp.solve().optimal()?;
    if t <= 0.0 {
        return None;
    }
    let theta = x[..d].to_vec();
    wealth(rows, w0, &theta)
        .iter()
        .all(|&w| u.in_domain(w))
        .then_some(theta)
}

/// Maximizes expected utility over hedges. `Ok(None)` when no hedge keeps
/// wealth inside the utility's domain.
pub(crate) fn maximize(
    u: &Utility,
    probs: &[f64],
    rows: &[&[f64]],
    w0: &[f64],
    theta0: &[f64],
) -> Result<Option<UtilitySolve>> {
    let Some(mut theta) = feasible_start(u, rows, w0, theta0) else {
        return Ok(None);
    };
    let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
        let wl = wealth(rows, w0, theta);
        let v = if wl.iter().all(|&w| u.in_domain(w)) {
            probs.iter().zip(&wl).map(|(p, &w)| p * u.value(w)).sum()
        } else {
            f64::NEG_INFINITY
        };
        (v, wl)
    };
    let scale = rows.iter().map(|r| inf_norm(r)).fold(0.0, f64::max).max(1e-300);
    let (mut val, mut wl) = eval(&theta);
    let d = rows.len();
    for it in 0..MAX_NEWTON {
        let mu: Vec<f64> = wl.iter().map(|&w| u.marginal(w)).collect();
        let norm: f64 = dot(probs, &mu);
        let grad: Vec<f64> = rows
            .iter()
            .map(|r| (0..probs.len()).map(|w| probs[w] * mu[w] * r[w]).sum())
            .collect();
        let gnorm = inf_norm(&grad);
        if gnorm <= 1e-12 * scale * norm {
            return Ok(Some(UtilitySolve {
                value: val,
                residual: gnorm / norm,
                theta,
                wealth: wl,
                iterations: it,
            }));
        }
        // Negative Hessian of E[U]: positive semidefinite.
        let neg_hess = DMatrix::from_fn(d, d, |j, k| {
            (0..probs.len())
                .map(|w| -probs[w] * u.curvature(wl[w]) * rows[j][w] * rows[k][w])
                .sum()
        });
        let g = DVector::from_column_slice(&grad);
        let newton: Vec<f64> = pinv_solve(neg_hess, &g, 1e-14).iter().copied().collect();
        let ascent: Vec<f64> = grad.iter().map(|v| v / norm / scale / scale).collect();
        let mut moved = false;
        for dir in [newton, ascent] {
            let slope = dot(&dir, &grad);
            if slope <= 0.0 || slope.is_nan() {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..80 {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                let (cv, cw) = eval(&cand);
                if cv.is_finite() {
                    let armijo = cv >= val + 1e-4 * t * slope;
                    let noise = cv >= val - 4.0 * f64::EPSILON * val.abs().max(1e-300) && {
                        let cmu: Vec<f64> = cw.iter().map(|&w| u.marginal(w)).collect();
                        let cg: f64 = rows
                            .iter()
                            .map(|r| {
                                (0..probs.len())
                                    .map(|w| probs[w] * cmu[w] * r[w])
                                    .sum::<f64>()
                                    .abs()
                            })
                            .fold(0.0, f64::max);
                        cg / dot(probs, &cmu) < gnorm / norm
                    };
                    if armijo || noise {
                        theta = cand;
                        val = cv;
                        wl = cw;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            if gnorm <= 1e-10 * scale * norm {
                return Ok(Some(UtilitySolve {
                    value: val,
                    residual: gnorm / norm,
                    theta,
                    wealth: wl,
                    iterations: it,
                }));
            }
            return Err(Error::non_convergence("utility hedge", it, gnorm / norm, theta));
        }
    }
    Err(Error::non_convergence("utility hedge", MAX_NEWTON, f64::NAN, theta))
}

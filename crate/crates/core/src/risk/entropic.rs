//! `l(X) = min_theta (1/gamma) log E^P[exp(-gamma (X + theta . dS))]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, pinv_solve, softmax};

const MAX_NEWTON: usize = 200;

pub(crate) struct EntropicSolve {
    pub value: f64,
    pub theta: Vec<f64>,
    pub measure: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

struct State {
    h: f64,
    q: Vec<f64>,
    grad: Vec<f64>,
}

fn state(log_p: &[f64], rows: &[&[f64]], gamma: f64, x: &[f64], theta: &[f64]) -> State {
    let z: Vec<f64> = (0..x.len())
        .map(|w| {
            let gain: f64 = rows.iter().zip(theta).map(|(r, t)| t * r[w]).sum();
            log_p[w] - gamma * (x[w] + gain)
        })
        .collect();
    let h = log_sum_exp(&z) / gamma;
    let q = softmax(&z);
    let grad = rows.iter().map(|r| -dot(&q, r)).collect();
    State { h, q, grad }
}

fn hessian(q: &[f64], rows: &[&[f64]], gamma: f64) -> DMatrix<f64> {
    let d = rows.len();
    let means: Vec<f64> = rows.iter().map(|r| dot(q, r)).collect();
    DMatrix::from_fn(d, d, |j, k| {
        let c: f64 = q
            .iter()
            .enumerate()
            .map(|(w, qw)| qw * (rows[j][w] - means[j]) * (rows[k][w] - means[k]))
            .sum();
        gamma * c
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Damped Newton on the convex function `h(theta)`; the gradient is
/// `-E^q[dS]` and the Hessian `gamma Cov^q(dS)` under the tilted measure `q`.
pub(crate) fn solve(
    log_p: &[f64],
    rows: &[&[f64]],
    gamma: f64,
    x: &[f64],
    theta0: &[f64],
) -> Result<EntropicSolve> {
    let scale = rows.iter().map(|r| inf_norm(r)).fold(0.0, f64::max).max(1e-300);
    let tight = 1e-12 * scale;
    let loose = 1e-10 * scale;
    let mut theta = theta0.to_vec();
    let mut st = state(log_p, rows, gamma, x, &theta);
    for it in 0..MAX_NEWTON {
        let gnorm = inf_norm(&st.grad);
        if gnorm <= tight {
            return Ok(done(st, theta, it));
        }
        let hess = hessian(&st.q, rows, gamma);
        let g = DVector::from_column_slice(&st.grad);
        let newton: Vec<f64> = pinv_solve(hess, &(-&g), 1e-14).iter().copied().collect();
        let steepest: Vec<f64> = st.grad.iter().map(|v| -v / gamma / scale / scale).collect();
        let mut moved = false;
        for dir in [newton, steepest] {
            let slope = dot(&dir, &st.grad);
            if slope >= 0.0 || slope.is_nan() {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..60 {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                let next = state(log_p, rows, gamma, x, &cand);
                let armijo = next.h <= st.h + 1e-4 * t * slope;
                // Below value resolution, accept steps that shrink the gradient.
                let noise = next.h <= st.h + 4.0 * f64::EPSILON * st.h.abs().max(1.0)
                    && inf_norm(&next.grad) < gnorm;
                if next.h.is_finite() && (armijo || noise) {
                    theta = cand;
                    st = next;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            if gnorm <= loose {
                return Ok(done(st, theta, it));
            }
            return Err(Error::non_convergence("entropic hedge", it, gnorm, theta));
        }
    }
    let gnorm = inf_norm(&st.grad);
    if gnorm <= loose {
        return Ok(done(st, theta, MAX_NEWTON));
    }
    Err(Error::non_convergence("entropic hedge", MAX_NEWTON, gnorm, theta))
}

fn done(st: State, theta: Vec<f64>, iterations: usize) -> EntropicSolve {
    EntropicSolve {
        value: st.h,
        residual: inf_norm(&st.grad),
        theta,
        measure: st.q,
        iterations,
    }
}

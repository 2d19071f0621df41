//! Quasi-Newton minimization (BFGS, strong-Wolfe line search).

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    /// Stop when `|grad|_inf <= grad_tol`.
    pub grad_tol: f64,
    pub max_iterations: usize,
    /// Report divergence once `|x|_inf` exceeds this bound.
    pub divergence_bound: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            grad_tol: 1e-10,
            max_iterations: 500,
            divergence_bound: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsStatus {
    Converged,
    /// No further decrease possible at working precision.
    Stalled,
    Diverged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub status: BfgsStatus,
}

impl BfgsOutcome {
    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + t * b).collect()
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LS: usize = 60;

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizes a smooth function given value and gradient.
pub fn minimize<F>(mut fg: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (f0, g0) = fg(x0)?;
    let mut cur = Point {
        x: x0.to_vec(),
        f: f0,
        g: g0,
    };
    let finish = |p: Point, it: usize, status| BfgsOutcome {
        x: p.x,
        value: p.f,
        grad: p.g,
        iterations: it,
        status,
    };
    if n == 0 {
        return Ok(finish(cur, 0, BfgsStatus::Converged));
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    for it in 0..opts.max_iterations {
        let gnorm = inf_norm(&cur.g);
        if gnorm <= opts.grad_tol {
            return Ok(finish(cur, it, BfgsStatus::Converged));
        }
        if inf_norm(&cur.x) > opts.divergence_bound {
            return Ok(finish(cur, it, BfgsStatus::Diverged));
        }
        let g = DVector::from_column_slice(&cur.g);
        let mut p: Vec<f64> = (-(&h * &g)).iter().copied().collect();
        let mut slope = dot(&p, &cur.g);
        if slope >= 0.0 || slope.is_nan() {
            h = DMatrix::identity(n, n);
            fresh = true;
            p = cur.g.iter().map(|v| -v).collect();
            slope = dot(&p, &cur.g);
        }
        let alpha0 = if fresh {
            (1.0 / inf_norm(&p)).min(1.0)
        } else {
            1.0
        };
        let next = match strong_wolfe(&mut fg, &cur, &p, slope, alpha0)? {
            Some(pt) => Some(pt),
            None => {
                // Near the optimum the value stops resolving decreases; accept a
                // step that still shrinks the gradient.
                let xt = axpy(&cur.x, 1.0, &p);
                let (ft, gt) = fg(&xt)?;
                if inf_norm(&gt) < gnorm && ft <= cur.f + 1e-12 * (1.0 + cur.f.abs()) {
                    Some(Point { x: xt, f: ft, g: gt })
                } else {
                    None
                }
            }
        };
        let Some(next) = next else {
            if !fresh {
                h = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            return Ok(finish(cur, it, BfgsStatus::Stalled));
        };
        let s = DVector::from_iterator(n, next.x.iter().zip(&cur.x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, next.g.iter().zip(&cur.g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-300 && sy > 1e-14 * s.norm() * y.norm() {
            if fresh {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 yHy + rho) s s'
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        cur = next;
    }
    let status = if inf_norm(&cur.g) <= opts.grad_tol {
        BfgsStatus::Converged
    } else {
        BfgsStatus::MaxIterations
    };
    Ok(finish(cur, opts.max_iterations, status))
}

fn strong_wolfe<F>(fg: &mut F, cur: &Point, p: &[f64], slope0: f64, alpha0: f64) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let f0 = cur.f;
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = slope0;
    let mut a = alpha0;
    let a_max = 1e12;
    for i in 0..MAX_LS {
        let x = axpy(&cur.x, a, p);
        let (f, g) = fg(&x)?;
        let d = dot(&g, p);
        if !f.is_finite() || f > f0 + C1 * a * slope0 || (i > 0 && f >= f_prev) {
            return zoom(fg, cur, p, slope0, (a_prev, f_prev, d_prev), (a, f, d));
        }
        if d.abs() <= -C2 * slope0 {
            return Ok(Some(Point { x, f, g }));
        }
        if d >= 0.0 {
            return zoom(fg, cur, p, slope0, (a, f, d), (a_prev, f_prev, d_prev));
        }
        if a >= a_max {
            return Ok(Some(Point { x, f, g }));
        }
        a_prev = a;
        f_prev = f;
        d_prev = d;
        a = (4.0 * a).min(a_max);
    }
    Ok(None)
}

/// Nocedal-Wright zoom; `lo` always satisfies sufficient decrease.
fn zoom<F>(
    fg: &mut F,
    cur: &Point,
    p: &[f64],
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let f0 = cur.f;
    let mut best: Option<Point> = None;
    for _ in 0..MAX_LS {
        let (al, ah) = (lo.0, hi.0);
        if (ah - al).abs() <= 1e-16 * al.abs().max(ah.abs()).max(1e-300) {
            break;
        }
        let a = interpolate(lo, hi);
        let x = axpy(&cur.x, a, p);
        let (f, g) = fg(&x)?;
        let d = dot(&g, p);
        if !f.is_finite() || f > f0 + C1 * a * slope0 || f >= lo.1 {
            hi = (a, f, d);
        } else {
            if d.abs() <= -C2 * slope0 {
                return Ok(Some(Point { x, f, g }));
            }
            if d * (ah - al) >= 0.0 {
                hi = lo;
            }
            lo = (a, f, d);
            best = Some(Point { x, f, g });
        }
    }
    // Sufficient decrease without curvature is still a usable step.
    Ok(best.filter(|b| b.f < f0))
}

fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a0, f0, d0) = lo;
    let (a1, f1, d1) = hi;
    let (left, right) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let width = right - left;
    if f1.is_finite() && d1.is_finite() {
        let d1c = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
        let disc = d1c * d1c - d0 * d1;
        if disc >= 0.0 {
            let d2 = (a1 - a0).signum() * disc.sqrt();
            let a = a1 - (a1 - a0) * (d1 + d2 - d1c) / (d1 - d0 + 2.0 * d2);
            if a.is_finite() && a > left + 0.1 * width && a < right - 0.1 * width {
                return a;
            }
        }
    }
    0.5 * (left + right)
}

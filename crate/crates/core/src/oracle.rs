//! Brute-force reference implementations for tests. Deliberately plain:
//! exhaustive grids, golden-section searches and bisection, no warm starts.

use crate::equilibrium::{Allocation, Bundle};
use crate::error::{Error, Result};
use crate::market::FiniteMarket;
use crate::risk::{Penalty, PenaltyFunction, Preference, RiskModel, Utility};

const MAX_POINTS: f64 = 1e8;

/// A box lattice `lower + k * step`, inclusive of the upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: f64,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, step: f64) -> Self {
        GridSpec { lower, upper, step }
    }

    pub fn cube(dims: usize, lo: f64, hi: f64, step: f64) -> Self {
        GridSpec::new(vec![lo; dims], vec![hi; dims], step)
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    fn counts(&self) -> Result<Vec<usize>> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::GridTooCoarse(format!("step {} must be positive", self.step)));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::Dimension("grid bounds differ in length".into()));
        }
        let mut total = 1.0;
        let mut counts = Vec::with_capacity(self.dims());
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::GridTooCoarse(format!("bad bounds [{lo}, {hi}]")));
            }
            let c = ((hi - lo) / self.step + 1e-9).floor() as usize + 1;
            total *= c as f64;
            counts.push(c);
        }
        if total > MAX_POINTS {
            return Err(Error::GridTooCoarse(format!("{total:e} grid points exceed the guard")));
        }
        Ok(counts)
    }

    fn coord(&self, dim: usize, k: usize) -> f64 {
        self.lower[dim] + k as f64 * self.step
    }

    /// All points, first coordinate slowest (lexicographic order).
    fn points(&self) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
        let counts = self.counts()?;
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; counts.len()];
        for _ in 0..total {
            let x = idx.iter().enumerate().map(|(d, &k)| self.coord(d, k)).collect();
            out.push((idx.clone(), x));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(out)
    }
}

fn view_rows<'a>(model: &RiskModel, market: &'a FiniteMarket) -> Vec<&'a [f64]> {
    model
        .view
        .indices()
        .iter()
        .map(|&j| market.increments()[j].as_slice())
        .collect()
}

/// Utility whose indifference price is the agent's capital requirement.
fn utility_of(model: &RiskModel) -> (Box<dyn Fn(f64) -> f64>, f64) {
    match &model.preference {
        Preference::Entropic { gamma } => {
            let g = *gamma;
            (Box::new(move |w: f64| -(-g * w).exp()), 0.0)
        }
        Preference::Utility {
            utility,
            initial_wealth,
        } => match *utility {
            Utility::Exponential { gamma } => (Box::new(move |w: f64| -(-gamma * w).exp() / gamma), *initial_wealth),
            Utility::Power { exponent, lower_bound } => (
                Box::new(move |w: f64| {
                    if w > lower_bound {
                        (w - lower_bound).powf(exponent) / exponent
                    } else {
                        f64::NEG_INFINITY
                    }
                }),
                *initial_wealth,
            ),
        },
    }
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Capital requirement by exhaustion: the least `m` on a lattice of step
/// `m_step` such that the best expected utility over the hedge grid reaches
/// the level attained without the claim.
pub fn rho_primal_grid(
    model: &RiskModel,
    market: &FiniteMarket,
    claim: &[f64],
    theta_grid: &GridSpec,
    m_step: f64,
) -> Result<f64> {
    let rows = view_rows(model, market);
    if rows.len() > 2 || market.num_states() > 8 {
        return Err(Error::GridTooCoarse("oracle supports d <= 2 and at most 8 states".into()));
    }
    if theta_grid.dims() != rows.len() {
        return Err(Error::Dimension("hedge grid dimension differs from the view".into()));
    }
    let thetas = theta_grid.points()?;
    let (u, x) = utility_of(model);
    let probs = market.probs();
    let best = |w0: &[f64]| -> f64 {
        thetas
            .iter()
            .map(|(_, th)| {
                (0..w0.len())
                    .map(|w| {
                        let gain: f64 = rows.iter().zip(th).map(|(r, t)| r[w] * t).sum();
                        probs[w] * u(w0[w] + gain)
                    })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let base: Vec<f64> = model.endowment.iter().map(|e| x + e).collect();
    let u0 = best(&base);
    if !u0.is_finite() {
        return Err(Error::GridTooCoarse("no hedge on the grid keeps wealth in the domain".into()));
    }
    let bound = sup_norm(claim);
    let lower = -bound - m_step;
    let count = ((2.0 * bound + 2.0 * m_step) / m_step).ceil() as usize + 1;
    let accepts = |k: usize| {
        let m = lower + k as f64 * m_step;
        let w: Vec<f64> = base.iter().zip(claim).map(|(b, c)| b + c + m).collect();
        best(&w) >= u0
    };
    if accepts(0) || !accepts(count - 1) {
        return Err(Error::GridTooCoarse("cash lattice does not bracket the requirement".into()));
    }
    let (mut lo, mut hi) = (0usize, count - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if accepts(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lower + hi as f64 * m_step)
}

/// Solves `A_B q_B = b - A_F q_F` for the basic coordinates.
struct Parametrization {
    basic: Vec<usize>,
    free: Vec<usize>,
    /// Reduced system `[I | M | c]`: `q_B = c - M q_F`.
    m: Vec<Vec<f64>>,
    c: Vec<f64>,
}

fn parametrize(rows: &[Vec<f64>], rhs: &[f64], cols: usize) -> Parametrization {
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .zip(rhs)
        .map(|(r, b)| {
            let mut v = r.clone();
            v.push(*b);
            v
        })
        .collect();
    let mut basic = Vec::new();
    let mut r = 0;
    for col in 0..cols {
        if r == a.len() {
            break;
        }
        let piv = (r..a.len()).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()));
        let Some(piv) = piv else { break };
        if a[piv][col].abs() < 1e-12 {
            continue;
        }
        a.swap(r, piv);
        let d = a[r][col];
        for v in a[r].iter_mut() {
            *v /= d;
        }
        for i in 0..a.len() {
            if i != r {
                let f = a[i][col];
                if f != 0.0 {
                    let row_r = a[r].clone();
                    for (v, w) in a[i].iter_mut().zip(&row_r) {
                        *v -= f * w;
                    }
                }
            }
        }
        basic.push(col);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !basic.contains(c)).collect();
    let m = (0..basic.len())
        .map(|i| free.iter().map(|&f| a[i][f]).collect())
        .collect();
    let c = (0..basic.len()).map(|i| a[i][cols]).collect();
    Parametrization { basic, free, m, c }
}

/// `max_q E^q[-claim] - alpha(q)` over a lattice of the agent's martingale
/// polytope: the free coordinates are gridded, the rest solved from the
/// martingale and normalization constraints.
pub fn rho_dual_grid(model: &RiskModel, market: &FiniteMarket, claim: &[f64], step: f64) -> Result<f64> {
    let n = market.num_states();
    if n > 4 {
        return Err(Error::GridTooCoarse("dual oracle supports at most 4 states".into()));
    }
    let mut rows = vec![vec![1.0; n]];
    rows.extend(view_rows(model, market).iter().map(|r| r.to_vec()));
    let mut rhs = vec![0.0; rows.len()];
    rhs[0] = 1.0;
    let par = parametrize(&rows, &rhs, n);
    let grid = GridSpec::cube(par.free.len(), 0.0, 1.0, step);
    let penalty = PenaltyFunction::new(model, market)?;
    let mut best = f64::NEG_INFINITY;
    for (_, qf) in grid.points()? {
        let mut q = vec![0.0; n];
        for (&f, v) in par.free.iter().zip(&qf) {
            q[f] = *v;
        }
        let mut feasible = true;
        for (i, &b) in par.basic.iter().enumerate() {
            let v = par.c[i] - par.m[i].iter().zip(&qf).map(|(a, x)| a * x).sum::<f64>();
            if v < -1e-12 {
                feasible = false;
                break;
            }
            q[b] = v.max(0.0);
        }
        if !feasible {
            continue;
        }
        let s: f64 = q.iter().sum();
        for v in q.iter_mut() {
            *v /= s;
        }
        let Penalty::Finite(alpha) = penalty.alpha(&q)?.alpha else {
            continue;
        };
        let value = -q.iter().zip(claim).map(|(a, b)| a * b).sum::<f64>() - alpha;
        best = best.max(value);
    }
    if !best.is_finite() {
        return Err(Error::GridTooCoarse("no lattice point lies in the polytope".into()));
    }
    Ok(best)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimizes a convex function of one variable (values may be `+inf`).
fn golden_min(h: &dyn Fn(f64) -> f64) -> f64 {
    // locate a finite starting point
    let mut x0 = 0.0;
    if !h(x0).is_finite() {
        let found = (1..=4000)
            .flat_map(|k| [k as f64 * 0.05, -(k as f64) * 0.05])
            .find(|&x| h(x).is_finite());
        match found {
            Some(x) => x0 = x,
            None => return f64::INFINITY,
        }
    }
    let f0 = h(x0);
    let mut step = 1.0;
    let (mut a, mut b) = (x0, x0 + step);
    let mut fb = h(b);
    if fb > f0 {
        step = -1.0;
        b = x0 + step;
        fb = h(b);
        if fb >= f0 {
            return golden_on(h, x0 - 1.0, x0 + 1.0);
        }
    }
    let (lo, hi) = loop {
        step *= 2.0;
        let c = b + step;
        let fc = h(c);
        if fc >= fb || c.abs() > 1e9 {
            break (a.min(c), a.max(c));
        }
        a = b;
        b = c;
        fb = fc;
    };
    golden_on(h, lo, hi)
}

fn golden_on(h: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (h(x1), h(x2));
    for _ in 0..300 {
        if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = h(x2);
        }
    }
    f1.min(f2)
}

/// `min_theta F(theta)` for `d <= 2` traded assets, nested golden sections.
fn min_over_hedges(rows: &[&[f64]], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    match rows.len() {
        0 => f(&[]),
        1 => golden_min(&|t| f(&[t])),
        _ => golden_min(&|t1| golden_min(&|t2| f(&[t1, t2]))),
    }
}

/// The oracle's own capital requirement, used inside the equilibrium search.
pub struct OracleRho<'a> {
    model: &'a RiskModel,
    market: &'a FiniteMarket,
    rows: Vec<&'a [f64]>,
    base: f64,
}

impl<'a> OracleRho<'a> {
    pub fn new(model: &'a RiskModel, market: &'a FiniteMarket) -> Result<Self> {
        let rows = view_rows(model, market);
        if rows.len() > 2 {
            return Err(Error::GridTooCoarse("oracle supports at most two traded assets".into()));
        }
        let mut o = OracleRho {
            model,
            market,
            rows,
            base: 0.0,
        };
        o.base = o.level(&vec![0.0; market.num_states()]);
        if !o.base.is_finite() {
            return Err(Error::DomainViolation("no hedge keeps wealth in the domain".into()));
        }
        Ok(o)
    }

    /// Entropic: `l(claim)`; utility: `-sup E[U]` at zero cash.
    fn level(&self, claim: &[f64]) -> f64 {
        let probs = self.market.probs();
        let rows = &self.rows;
        match &self.model.preference {
            Preference::Entropic { gamma } => {
                let g = *gamma;
                let x: Vec<f64> = self.model.endowment.iter().zip(claim).map(|(e, b)| e + b).collect();
                min_over_hedges(rows, &|th| {
                    let z: Vec<f64> = (0..x.len())
                        .map(|w| {
                            let gain: f64 = rows.iter().zip(th).map(|(r, t)| r[w] * t).sum();
                            probs[w].ln() - g * (x[w] + gain)
                        })
                        .collect();
                    let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()) / g
                })
            }
            Preference::Utility { .. } => self.neg_utility(claim, 0.0),
        }
    }

    fn neg_utility(&self, claim: &[f64], m: f64) -> f64 {
        let (u, x) = utility_of(self.model);
        let probs = self.market.probs();
        let rows = &self.rows;
        let w0: Vec<f64> = self
            .model
            .endowment
            .iter()
            .zip(claim)
            .map(|(e, b)| x + e + b + m)
            .collect();
        min_over_hedges(rows, &|th| {
            let v: f64 = (0..w0.len())
                .map(|w| {
                    let gain: f64 = rows.iter().zip(th).map(|(r, t)| r[w] * t).sum();
                    probs[w] * u(w0[w] + gain)
                })
                .sum();
            -v
        })
    }

    pub fn rho(&self, claim: &[f64]) -> f64 {
        match &self.model.preference {
            Preference::Entropic { .. } => self.level(claim) - self.base,
            Preference::Utility { .. } => {
                let bound = sup_norm(claim);
                let (mut lo, mut hi) = (-bound - 1e-9, bound + 1e-9);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.neg_utility(claim, mid) <= self.base {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo < 1e-13 {
                        break;
                    }
                }
                hi
            }
        }
    }
}

/// Equilibrium by exhaustion of the aggregate objective over an allocation
/// grid (`(I-1) n <= 2`). The price is the central difference of the last
/// agent's capital requirement at the grid minimizer.
pub fn pepa_grid_search(
    agents: &[RiskModel],
    market: &FiniteMarket,
    bundle: &Bundle,
    grid: &GridSpec,
) -> Result<(Vec<f64>, Allocation)> {
    let count = agents.len();
    let n = bundle.len();
    let dims = count.saturating_sub(1) * n;
    if dims > 2 || count == 0 {
        return Err(Error::GridTooCoarse("grid search supports (I-1) n <= 2".into()));
    }
    if grid.dims() != dims {
        return Err(Error::Dimension("allocation grid dimension mismatch".into()));
    }
    let rhos = agents
        .iter()
        .map(|a| OracleRho::new(a, market))
        .collect::<Result<Vec<_>>>()?;
    let counts = grid.counts()?;
    if counts.iter().any(|&c| c < 3) {
        return Err(Error::GridTooCoarse("need at least three points per dimension".into()));
    }
    let combine = |a: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; market.num_states()];
        for (c, w) in bundle.claims().iter().zip(a) {
            for (o, v) in out.iter_mut().zip(c.iter()) {
                *o += w * v;
            }
        }
        out
    };
    let rows_of = |x: &[f64]| -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = x.chunks(n.max(1)).map(|c| c.to_vec()).collect();
        rows.truncate(count - 1);
        let last = (0..n).map(|k| -rows.iter().map(|r| r[k]).sum::<f64>()).collect();
        rows.push(last);
        rows
    };
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for (idx, x) in grid.points()? {
        let f: f64 = rows_of(&x)
            .iter()
            .zip(&rhos)
            .map(|(a, r)| r.rho(&combine(a)))
            .sum();
        if best.as_ref().is_none_or(|(bf, _, _)| f < *bf) {
            best = Some((f, idx, x));
        }
    }
    let (_, idx, x) = best.expect("grid is non-empty");
    if idx.iter().zip(&counts).any(|(&k, &c)| k == 0 || k == c - 1) {
        return Err(Error::MinimumOnBoundary);
    }
    let weights = rows_of(&x);
    let last = weights.last().expect("at least one agent");
    let h = 1e-4;
    let price = (0..n)
        .map(|k| {
            let mut up = last.clone();
            let mut dn = last.clone();
            up[k] += h;
            dn[k] -= h;
            let r = &rhos[count - 1];
            -(r.rho(&combine(&up)) - r.rho(&combine(&dn))) / (2.0 * h)
        })
        .collect();
    Ok((price, Allocation { weights }))
}

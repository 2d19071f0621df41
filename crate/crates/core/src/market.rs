//! Finite-state, one-period market: reference probabilities, discounted
//! asset increments, replicable subspaces and martingale polytopes.
//!
//! The numeraire is implicit and constant, so every trading gain is
//! `theta . dS` and a claim is replicable for a view exactly when it lies in
//! `span{1, dS[view]}`.

use std::ops::{Deref, Index};

use nalgebra::{DMatrix, DVector};

use crate::equilibrium::Bundle;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation, Sense};

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const STRUCTURAL_TOL: f64 = 1e-10;
/// Tolerance for LP feasibility decisions.
pub const LP_TOL: f64 = 1e-9;
const PROB_SUM_TOL: f64 = 1e-12;

/// A terminal payoff, one entry per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim(pub Vec<f64>);

impl Claim {
    pub fn new(payoff: Vec<f64>) -> Self {
        Claim(payoff)
    }

    pub fn zeros(n: usize) -> Self {
        Claim(vec![0.0; n])
    }

    pub fn constant(n: usize, m: f64) -> Self {
        Claim(vec![m; n])
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Claim {
        Claim(self.0.iter().map(|v| s * v).collect())
    }

    pub fn plus(&self, other: &Claim) -> Claim {
        Claim(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn shifted(&self, m: f64) -> Claim {
        Claim(self.0.iter().map(|v| v + m).collect())
    }
}

impl Deref for Claim {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Claim {
    fn from(v: Vec<f64>) -> Self {
        Claim(v)
    }
}

/// The subset of assets an agent may trade (0-based, sorted, distinct).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MarketView {
    asset_indices: Vec<usize>,
}

impl MarketView {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        MarketView {
            asset_indices: indices,
        }
    }

    pub fn empty() -> Self {
        MarketView::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.asset_indices
    }

    pub fn len(&self) -> usize {
        self.asset_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asset_indices.is_empty()
    }

    pub fn union<'a>(views: impl IntoIterator<Item = &'a MarketView>) -> MarketView {
        MarketView::new(
            views
                .into_iter()
                .flat_map(|v| v.asset_indices.iter().copied())
                .collect(),
        )
    }
}

/// Martingale measures for a view: `{q in simplex : dS[view] . q = 0}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MartingalePolytope {
    pub view: MarketView,
}

impl MartingalePolytope {
    pub fn for_view(view: &MarketView) -> Self {
        MartingalePolytope { view: view.clone() }
    }

    /// The intersection of the polytopes of several views is the polytope of
    /// their union.
    pub fn intersection<'a>(views: impl IntoIterator<Item = &'a MarketView>) -> Self {
        MartingalePolytope {
            view: MarketView::union(views),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMarket {
    state_labels: Vec<String>,
    asset_names: Vec<String>,
    probs: Vec<f64>,
    /// `d` rows of length `|Omega|`.
    increments: Vec<Vec<f64>>,
    certificate: Vec<f64>,
}

/// Validates probabilities and increments and attaches a strictly positive
/// martingale measure.
pub fn build_market(probs: Vec<f64>, increments: Vec<Vec<f64>>) -> Result<FiniteMarket> {
    let states = (0..probs.len()).map(|i| format!("w{}", i + 1)).collect();
    let assets = (0..increments.len()).map(|j| format!("S{}", j + 1)).collect();
    FiniteMarket::new(states, assets, probs, increments)
}

impl FiniteMarket {
    pub fn new(
        state_labels: Vec<String>,
        asset_names: Vec<String>,
        probs: Vec<f64>,
        increments: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return Err(Error::InvalidProbabilities("no states".into()));
        }
        if state_labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} state labels for {} probabilities",
                state_labels.len(),
                n
            )));
        }
        if asset_names.len() != increments.len() {
            return Err(Error::Dimension(format!(
                "{} asset names for {} increment rows",
                asset_names.len(),
                increments.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidProbabilities(format!(
                "probability {p} is not strictly positive"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbabilities(format!(
                "probabilities sum to {total}"
            )));
        }
        for (j, row) in increments.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "asset {j} has {} increments for {n} states",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("asset {j} has non-finite increments")));
            }
        }
        let mut market = FiniteMarket {
            state_labels,
            asset_names,
            probs,
            increments,
            certificate: Vec::new(),
        };
        let full = market.full_view();
        match strictly_positive_point(&market, &full, &[]) {
            Some((q, t)) if t > LP_TOL => market.certificate = q,
            _ => {
                return Err(Error::ArbitrageDetected {
                    strategy: arbitrage_strategy(&market).unwrap_or_default(),
                })
            }
        }
        Ok(market)
    }

    /// Same increments, new reference measure.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        FiniteMarket::new(
            self.state_labels.clone(),
            self.asset_names.clone(),
            probs,
            self.increments.clone(),
        )
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_assets(&self) -> usize {
        self.increments.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn increments(&self) -> &[Vec<f64>] {
        &self.increments
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    /// A strictly positive martingale measure for the whole market.
    pub fn certificate(&self) -> &[f64] {
        &self.certificate
    }

    pub fn full_view(&self) -> MarketView {
        MarketView::new((0..self.num_assets()).collect())
    }

    pub fn validate_view(&self, view: &MarketView) -> Result<()> {
        match view.indices().iter().find(|&&j| j >= self.num_assets()) {
            Some(j) => Err(Error::validation(
                "view",
                format!("asset index {j} out of range for {} assets", self.num_assets()),
            )),
            None => Ok(()),
        }
    }

    pub fn view_increments(&self, view: &MarketView) -> Vec<&[f64]> {
        view.indices()
            .iter()
            .map(|&j| self.increments[j].as_slice())
            .collect()
    }

    /// `E^P[x]`.
    pub fn expect(&self, x: &[f64]) -> f64 {
        expectation(&self.probs, x)
    }

    /// Gains `theta . dS[view]` per state.
    pub fn gains(&self, view: &MarketView, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.num_states()];
        for (&j, &t) in view.indices().iter().zip(theta) {
            for (gw, d) in g.iter_mut().zip(&self.increments[j]) {
                *gw += t * d;
            }
        }
        g
    }
}

impl Index<usize> for FiniteMarket {
    type Output = [f64];
    fn index(&self, asset: usize) -> &[f64] {
        &self.increments[asset]
    }
}

pub fn expectation(q: &[f64], x: &[f64]) -> f64 {
    q.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `claim = constant + hedge . dS[view] + residual`, residual orthogonal to
/// the replicable subspace in the P-weighted inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicableSplit {
    pub hedge: Vec<f64>,
    pub constant: f64,
    pub residual: Vec<f64>,
}

impl ReplicableSplit {
    pub fn is_replicable(&self) -> bool {
        self.residual.iter().all(|r| r.abs() <= STRUCTURAL_TOL)
    }
}

pub fn replicable_split(market: &FiniteMarket, view: &MarketView, claim: &[f64]) -> ReplicableSplit {
    let n = market.num_states();
    let rows = market.view_increments(view);
    let k = rows.len() + 1;
    let sqrt_p: Vec<f64> = market.probs().iter().map(|p| p.sqrt()).collect();
    let design = DMatrix::from_fn(n, k, |w, c| {
        let v = if c == 0 { 1.0 } else { rows[c - 1][w] };
        sqrt_p[w] * v
    });
    let rhs = DVector::from_iterator(n, claim.iter().zip(&sqrt_p).map(|(c, s)| c * s));
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let beta = svd
        .solve(&rhs, 1e-12 * smax.max(1.0))
        .expect("svd computed with both factors");
    let constant = beta[0];
    let hedge: Vec<f64> = beta.iter().skip(1).copied().collect();
    let mut residual = claim.to_vec();
    for (w, r) in residual.iter_mut().enumerate() {
        *r -= constant;
        for (row, h) in rows.iter().zip(&hedge) {
            *r -= h * row[w];
        }
    }
    // Clean the last ulp-level noise so replicable claims report an exact zero.
    let scale = claim.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for r in residual.iter_mut() {
        if r.abs() < 1e-14 * scale {
            *r = 0.0;
        }
    }
    ReplicableSplit {
        hedge,
        constant,
        residual,
    }
}

fn polytope_lp(market: &FiniteMarket, view: &MarketView, sense: Sense, objective: Vec<f64>) -> LinearProgram {
    let n = market.num_states();
    let width = objective.len();
    let mut lp = LinearProgram::new(sense, objective);
    let mut ones = vec![0.0; width];
    ones[..n].fill(1.0);
    lp.add(ones, Relation::Eq, 1.0);
    for row in market.view_increments(view) {
        let mut c = vec![0.0; width];
        c[..n].copy_from_slice(row);
        lp.add(c, Relation::Eq, 0.0);
    }
    lp
}

/// Exact `(min, max)` of `E^q[claim]` over the martingale polytope.
pub fn support_bounds(
    market: &FiniteMarket,
    polytope: &MartingalePolytope,
    claim: &[f64],
) -> Result<(f64, f64)> {
    let solve = |sense| match polytope_lp(market, &polytope.view, sense, claim.to_vec()).solve() {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Infeasible { .. } => Err(Error::InfeasiblePolytope),
        LpOutcome::Unbounded => unreachable!("polytope is bounded"),
    };
    let lo = solve(Sense::Minimize)?;
    let hi = solve(Sense::Maximize)?;
    Ok((lo, hi.max(lo)))
}

/// Maximizes `min_w q_w` over the polytope of `view` intersected with the
/// extra equalities `E^q[row] = rhs`. Returns the maximizer and its minimum
/// entry, or `None` when the set is empty.
pub fn strictly_positive_point(
    market: &FiniteMarket,
    view: &MarketView,
    extra: &[(&[f64], f64)],
) -> Option<(Vec<f64>, f64)> {
    let n = market.num_states();
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = polytope_lp(market, view, Sense::Maximize, objective);
    for (row, rhs) in extra {
        let mut c = vec![0.0; n + 1];
        c[..n].copy_from_slice(row);
        lp.add(c, Relation::Eq, *rhs);
    }
    for w in 0..n {
        let mut c = vec![0.0; n + 1];
        c[w] = 1.0;
        c[n] = -1.0;
        lp.add(c, Relation::Ge, 0.0);
    }
    lp.solve().optimal().map(|(x, t)| (x[..n].to_vec(), t))
}

/// A strategy with nonnegative gains in every state and positive gains in
/// some, if one exists.
pub fn arbitrage_strategy(market: &FiniteMarket) -> Option<Vec<f64>> {
    let d = market.num_assets();
    let n = market.num_states();
    if d == 0 {
        return None;
    }
    let objective: Vec<f64> = (0..d)
        .map(|j| market.increments[j].iter().sum())
        .collect();
    let mut lp = LinearProgram::new(Sense::Maximize, objective);
    for j in 0..d {
        lp.set_free(j);
    }
    for w in 0..n {
        let c: Vec<f64> = (0..d).map(|j| market.increments[j][w]).collect();
        lp.add(c.clone(), Relation::Ge, 0.0);
        lp.add(c, Relation::Le, 1.0);
    }
    match lp.solve() {
        LpOutcome::Optimal { x, value } if value > LP_TOL => Some(x),
        _ => None,
    }
}

/// Outcome of the non-redundancy test for a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct NonRedundancy {
    pub holds: bool,
    /// Combination `delta` whose payoff has a constant price over the
    /// polytope; normalized to unit max-norm with a positive leading entry.
    pub witness: Option<Vec<f64>>,
    /// Smallest singular value of the residual bundle (P-weighted).
    pub min_singular_value: f64,
}

/// True iff no nonzero `delta` makes `delta . B` replicable on the polytope,
/// i.e. `min < max` of `E^q[delta . B]` for every direction.
pub fn check_non_redundancy(
    market: &FiniteMarket,
    bundle: &Bundle,
    polytope: &MartingalePolytope,
) -> NonRedundancy {
    let n = bundle.len();
    let states = market.num_states();
    let sqrt_p: Vec<f64> = market.probs().iter().map(|p| p.sqrt()).collect();
    let residuals: Vec<Vec<f64>> = bundle
        .claims()
        .iter()
        .map(|c| replicable_split(market, &polytope.view, c).residual)
        .collect();
    let cols = states.max(n);
    let m = DMatrix::from_fn(n, cols, |k, w| {
        if w < states {
            residuals[k][w] * sqrt_p[w]
        } else {
            0.0
        }
    });
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let scale = bundle
        .claims()
        .iter()
        .map(|c| c.sup_norm())
        .fold(1.0_f64, f64::max);
    let (kmin, smin) = sv
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    if smin <= 1e-9 * scale {
        let delta = normalize_direction(u.column(kmin).iter().copied().collect());
        return NonRedundancy {
            holds: false,
            witness: Some(delta),
            min_singular_value: smin,
        };
    }
    // LP confirmation along each singular direction.
    for k in 0..sv.len() {
        let delta: Vec<f64> = u.column(k).iter().copied().collect();
        let payoff = bundle.combine(&delta);
        if let Ok((lo, hi)) = support_bounds(market, polytope, &payoff) {
            if hi - lo <= LP_TOL {
                return NonRedundancy {
                    holds: false,
                    witness: Some(normalize_direction(delta)),
                    min_singular_value: smin,
                };
            }
        }
    }
    NonRedundancy {
        holds: true,
        witness: None,
        min_singular_value: smin,
    }
}

fn normalize_direction(mut v: Vec<f64>) -> Vec<f64> {
    let maxabs = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if maxabs == 0.0 {
        return v;
    }
    let lead = v.iter().copied().find(|x| x.abs() > 1e-9 * maxabs).unwrap_or(1.0);
    let s = lead.signum() / maxabs;
    for x in v.iter_mut() {
        *x *= s;
        if (*x - x.round()).abs() < 1e-12 {
            *x = x.round();
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix_b() -> FiniteMarket {
        build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap()
    }

    #[test]
    fn no_assets_is_arbitrage_free() {
        let m = build_market(vec![0.5, 0.5], vec![]).unwrap();
        assert_eq!(m.num_assets(), 0);
        assert!(m.certificate().iter().all(|&q| q > 0.0));
    }

    #[test]
    fn fix_b_certificate_is_uniform() {
        let m = fix_b();
        for q in m.certificate() {
            assert!((q - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn strictly_positive_gain_is_arbitrage() {
        let err = build_market(vec![0.5, 0.5], vec![vec![1.0, 2.0]]).unwrap_err();
        match err {
            Error::ArbitrageDetected { strategy } => assert!(strategy[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weak_arbitrage_is_rejected() {
        // gains (1, 0): no strictly positive martingale measure
        assert!(matches!(
            build_market(vec![0.5, 0.5], vec![vec![1.0, 0.0]]),
            Err(Error::ArbitrageDetected { .. })
        ));
    }

    #[test]
    fn probability_validation() {
        assert!(matches!(
            build_market(vec![0.5, 0.4], vec![]),
            Err(Error::InvalidProbabilities(_))
        ));
        assert!(matches!(
            build_market(vec![1.0, 0.0], vec![]),
            Err(Error::InvalidProbabilities(_))
        ));
        assert!(matches!(
            build_market(vec![0.5, 0.5], vec![vec![1.0]]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn split_of_asset_is_itself() {
        let m = fix_b();
        let s = replicable_split(&m, &m.full_view(), &[1.0, 1.0, -1.0, -1.0]);
        assert!((s.hedge[0] - 1.0).abs() < 1e-12);
        assert!(s.constant.abs() < 1e-12);
        assert!(s.is_replicable());
    }

    #[test]
    fn split_of_digital_matches_hand_projection() {
        let m = fix_b();
        let s = replicable_split(&m, &m.full_view(), &[1.0, 0.0, 1.0, 0.0]);
        assert!((s.constant - 0.5).abs() < 1e-12);
        assert!(s.hedge[0].abs() < 1e-12);
        for (r, e) in s.residual.iter().zip([0.5, -0.5, 0.5, -0.5]) {
            assert!((r - e).abs() < 1e-12);
        }
        assert!(!s.is_replicable());
    }

    #[test]
    fn split_of_constant() {
        let m = fix_b();
        let s = replicable_split(&m, &m.full_view(), &[3.5; 4]);
        assert!((s.constant - 3.5).abs() < 1e-12);
        assert!(s.hedge[0].abs() < 1e-12);
        assert!(s.is_replicable());
    }

    #[test]
    fn split_with_redundant_assets_is_minimal_norm() {
        let m = build_market(
            vec![0.25; 4],
            vec![vec![1.0, 1.0, -1.0, -1.0], vec![2.0, 2.0, -2.0, -2.0]],
        )
        .unwrap();
        let s = replicable_split(&m, &m.full_view(), &[5.0, 5.0, -5.0, -5.0]);
        assert!(s.is_replicable());
        let g = m.gains(&m.full_view(), &s.hedge);
        assert!((g[0] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn support_bounds_fix_b() {
        let m = fix_b();
        let poly = MartingalePolytope::for_view(&m.full_view());
        let (lo, hi) = support_bounds(&m, &poly, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let (lo, hi) = support_bounds(&m, &poly, &[2.0; 4]).unwrap();
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
        let (lo, hi) = support_bounds(&m, &poly, &[3.0, 3.0, -3.0, -3.0]).unwrap();
        assert!(lo.abs() < 1e-12 && hi.abs() < 1e-12);
    }

    #[test]
    fn empty_view_polytope_is_simplex() {
        let m = fix_b();
        let poly = MartingalePolytope::for_view(&MarketView::empty());
        let (lo, hi) = support_bounds(&m, &poly, &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_redundancy_cases() {
        let m = fix_b();
        let poly = MartingalePolytope::for_view(&m.full_view());
        let b = Claim(vec![1.0, 0.0, 1.0, 0.0]);
        let ds = Claim(vec![1.0, 1.0, -1.0, -1.0]);

        let r = check_non_redundancy(&m, &Bundle::new(vec![b.clone()]).unwrap(), &poly);
        assert!(r.holds);

        let r = check_non_redundancy(&m, &Bundle::new(vec![ds]).unwrap(), &poly);
        assert!(!r.holds);
        assert_eq!(r.witness.unwrap(), vec![1.0]);

        let r = check_non_redundancy(&m, &Bundle::new(vec![b.clone(), b]).unwrap(), &poly);
        assert!(!r.holds);
        assert_eq!(r.witness.unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn bundle_with_replicable_row_names_that_row() {
        let m = fix_b();
        let poly = MartingalePolytope::for_view(&m.full_view());
        let bundle = Bundle::new(vec![
            Claim(vec![1.0, 0.0, 1.0, 0.0]),
            Claim(vec![1.0, 1.0, -1.0, -1.0]),
        ])
        .unwrap();
        let r = check_non_redundancy(&m, &bundle, &poly);
        assert!(!r.holds);
        assert_eq!(r.witness.unwrap(), vec![0.0, 1.0]);
    }
}

mod common;

use common::*;
use equilibria::market::{
    arbitrage_strategy, build_market, check_non_redundancy, replicable_split, strictly_positive_point, support_bounds,
    FiniteMarket, MarketView, MartingalePolytope,
};
use equilibria::equilibrium::Bundle;
use equilibria::market::Claim;
use equilibria::Error;

fn fix_b_market() -> FiniteMarket {
    build_market(vec![0.25; 4], vec![vec![1.0, 1.0, -1.0, -1.0]]).unwrap()
}

#[test]
fn rejects_bad_probabilities() {
    assert!(matches!(build_market(vec![0.5, 0.6], vec![]), Err(Error::InvalidProbabilities(_))));
    assert!(matches!(build_market(vec![1.0, 0.0], vec![]), Err(Error::InvalidProbabilities(_))));
    assert!(matches!(build_market(vec![0.5, 0.5], vec![vec![1.0]]), Err(Error::Dimension(_))));
}

#[test]
fn detects_arbitrage_with_strategy() {
    match build_market(vec![0.5, 0.5], vec![vec![1.0, 0.5]]) {
        Err(Error::ArbitrageDetected { strategy }) => {
            assert_eq!(strategy.len(), 1);
            assert!(strategy[0] > 0.0);
        }
        other => panic!("expected arbitrage, got {other:?}"),
    }
}

#[test]
fn certificate_is_an_equivalent_martingale_measure() {
    let m = fixture("fix_d").market;
    let q = m.certificate();
    assert!(q.iter().all(|&x| x > 0.0));
    assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for j in 0..m.num_assets() {
        let e: f64 = q.iter().zip(&m[j]).map(|(a, b)| a * b).sum();
        assert!(e.abs() < 1e-10);
    }
    assert!(arbitrage_strategy(&m).is_none());
}

#[test]
fn replicable_split_reconstructs_the_claim() {
    let m = fixture("fix_d").market;
    let mut rng = rng(11);
    for _ in 0..20 {
        let x = random_claim(&mut rng, m.num_states(), 2.0);
        let s = replicable_split(&m, &m.full_view(), &x);
        let g = m.gains(&m.full_view(), &s.hedge);
        for w in 0..m.num_states() {
            assert!((s.constant + g[w] + s.residual[w] - x[w]).abs() < 1e-12);
        }
        assert!(!s.is_replicable());
    }
    let theta = [0.7, -1.3];
    let y = Claim(m.gains(&m.full_view(), &theta)).shifted(0.4);
    let s = replicable_split(&m, &m.full_view(), &y);
    assert!(s.is_replicable());
    assert!((s.constant - 0.4).abs() < 1e-12);
    assert!(sup_diff(&s.hedge, &theta) < 1e-10);
}

#[test]
fn support_bounds_of_fix_b_claim() {
    let m = fix_b_market();
    let poly = MartingalePolytope::for_view(&m.full_view());
    let (lo, hi) = support_bounds(&m, &poly, &[1.0, 0.0, 1.0, 0.0]).unwrap();
    assert!(lo.abs() < 1e-9);
    assert!((hi - 1.0).abs() < 1e-9);
    let (lo, hi) = support_bounds(&m, &poly, &[1.0, 1.0, 0.0, 0.0]).unwrap();
    assert!((lo - 0.5).abs() < 1e-9 && (hi - 0.5).abs() < 1e-9);
}

#[test]
fn interior_point_is_strictly_positive() {
    let m = fixture("fix_d").market;
    let (q, t) = strictly_positive_point(&m, &MarketView::new(vec![0]), &[]).unwrap();
    assert!(t > 0.0);
    assert!(q.iter().all(|&x| x >= t - 1e-12));
    let e: f64 = q.iter().zip(&m[0]).map(|(a, b)| a * b).sum();
    assert!(e.abs() < 1e-9);
}

#[test]
fn non_redundancy_witness() {
    let m = fix_b_market();
    let poly = MartingalePolytope::for_view(&m.full_view());
    let ok = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0])]).unwrap();
    assert!(check_non_redundancy(&m, &ok, &poly).holds);
    let bad = Bundle::new(vec![Claim(vec![1.0, 0.0, 1.0, 0.0]), Claim(vec![0.0, 1.0, 0.0, 1.0])]).unwrap();
    let r = check_non_redundancy(&m, &bad, &poly);
    assert!(!r.holds);
    assert_eq!(r.witness.unwrap(), vec![1.0, 1.0]);
}

#[test]
fn intersection_of_views_unions_the_assets() {
    let views = [MarketView::new(vec![1]), MarketView::new(vec![0])];
    let u = MarketView::union(views.iter());
    assert_eq!(u.indices(), &[0, 1]);
    let poly = MartingalePolytope::intersection(views.iter());
    assert_eq!(poly.view.indices(), &[0, 1]);
}

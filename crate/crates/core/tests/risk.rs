mod common;

use common::*;
use equilibria::equilibrium::Bundle;
use equilibria::market::{Claim, MarketView};
use equilibria::risk::{
    penalty_alpha, rho, strict_convexity_probe, Penalty, ProbeSamples, RiskEvaluator, RiskModel, Utility,
};
use equilibria::Error;
use proptest::prelude::*;

fn claim6() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0_f64, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cash_invariance_and_convexity(x in claim6(), z in claim6(), m in -5.0..5.0_f64, lam in 0.0..1.0_f64) {
        let d = fixture("fix_d");
        for model in &d.agents {
            let mut ev = RiskEvaluator::new(model, &d.market).unwrap();
            let (x, z) = (Claim(x.clone()), Claim(z.clone()));
            let rx = ev.evaluate(&x).unwrap().value;
            let rz = ev.evaluate(&z).unwrap().value;
            let shifted = ev.evaluate(&x.shifted(m)).unwrap().value;
            prop_assert!((shifted - (rx - m)).abs() < 1e-9);
            let mix = ev.evaluate(&x.scaled(lam).plus(&z.scaled(1.0 - lam))).unwrap().value;
            prop_assert!(mix <= lam * rx + (1.0 - lam) * rz + 1e-9);
        }
    }

    #[test]
    fn fenchel_inequality_is_tight_at_the_optimizer(x in prop::collection::vec(-1.0..1.0_f64, 4), y in prop::collection::vec(-1.0..1.0_f64, 4)) {
        let c = fixture("fix_c");
        for model in &c.agents {
            let ex = rho(model, &c.market, &x).unwrap();
            let q = ex.optimizer_measure.clone();
            let a = penalty_alpha(model, &c.market, &q).unwrap().alpha.finite().unwrap();
            let eq: f64 = q.iter().zip(&x).map(|(p, v)| -p * v).sum();
            prop_assert!((ex.value - (eq - a)).abs() < 1e-8);
            // Another admissible measure gives a lower bound.
            let qy = rho(model, &c.market, &y).unwrap().optimizer_measure;
            let ay = penalty_alpha(model, &c.market, &qy).unwrap().alpha.finite().unwrap();
            let ey: f64 = qy.iter().zip(&x).map(|(p, v)| -p * v).sum();
            prop_assert!(ex.value >= ey - ay - 1e-9);
        }
    }
}

#[test]
fn exponential_utility_matches_entropic() {
    let d = fixture("fix_d");
    let view = MarketView::new(vec![0, 1]);
    let e = Claim(vec![0.1, 0.0, -0.2, 0.3, 0.0, 0.1]);
    let ent = RiskModel::entropic(0.7, e.clone(), view.clone());
    let ut = RiskModel::utility(Utility::Exponential { gamma: 0.7 }, 2.5, e, view);
    let mut rng = rng(21);
    for _ in 0..20 {
        let x = random_claim(&mut rng, 6, 1.5);
        let a = rho(&ent, &d.market, &x).unwrap();
        let b = rho(&ut, &d.market, &x).unwrap();
        assert!((a.value - b.value).abs() < 1e-10);
        assert!(sup_diff(&a.optimizer_measure, &b.optimizer_measure) < 1e-8);
    }
}

#[test]
fn penalty_off_the_polytope_is_infinite() {
    let c = fixture("fix_c");
    let v = penalty_alpha(&c.agents[0], &c.market, &[0.4, 0.4, 0.1, 0.1]).unwrap();
    assert_eq!(v.alpha, Penalty::Infinite);
    let p = penalty_alpha(&c.agents[0], &c.market, &[0.25; 4]).unwrap();
    assert!(p.alpha.finite().unwrap().abs() < 1e-12);
}

#[test]
fn utility_models_have_no_closed_penalty() {
    let d = fixture("fix_d");
    let q = d.market.certificate().to_vec();
    assert!(matches!(penalty_alpha(&d.agents[1], &d.market, &q), Err(Error::PenaltyUnavailable(_))));
}

#[test]
fn invalid_parameters_are_rejected() {
    let c = fixture("fix_c");
    let bad = RiskModel::entropic(-1.0, Claim::zeros(4), c.market.full_view());
    assert!(bad.validate(&c.market).is_err());
    let bad_power = RiskModel::utility(
        Utility::Power { exponent: 1.5, lower_bound: 0.0 },
        1.0,
        Claim::zeros(4),
        c.market.full_view(),
    );
    assert!(bad_power.validate(&c.market).is_err());
}

#[test]
fn power_utility_outside_its_domain() {
    let c = fixture("fix_c");
    let m = RiskModel::utility(
        Utility::Power { exponent: 0.5, lower_bound: 0.0 },
        -1.0,
        Claim::zeros(4),
        c.market.full_view(),
    );
    assert!(matches!(RiskEvaluator::new(&m, &c.market), Err(Error::DomainViolation(_))));
}

#[test]
fn probe_flags_equality_directions() {
    let b = fixture("fix_b");
    let ok = strict_convexity_probe(&b.agents[0], &b.market, &b.bundle, &ProbeSamples::Random { count: 16, radius: 2.0, seed: 3 }).unwrap();
    assert!(ok.passed());
    let redundant = Bundle::new(vec![Claim(vec![1.0, 1.0, 0.0, 0.0])]).unwrap();
    let rep = strict_convexity_probe(&b.agents[0], &b.market, &redundant, &ProbeSamples::Random { count: 4, radius: 1.0, seed: 3 }).unwrap();
    assert!(rep.equality_direction_detected());
}

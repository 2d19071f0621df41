mod common;

use common::*;
use equilibria::equilibrium::SolverConfig;
use equilibria::stability::{ramp_distribution, run_stability_sweep, FamilyKind, PerturbationFamily};

#[test]
fn constant_family_has_zero_gaps() {
    let c = fixture("fix_c");
    let fam = PerturbationFamily::geometric(FamilyKind::Constant, c.agents.clone(), 4);
    let r = run_stability_sweep(&fam, &c.market, &c.bundle, &SolverConfig::default()).unwrap();
    assert_eq!(r.rows.len(), 4);
    for row in &r.rows {
        assert!(row.price_gap < 1e-12 && row.alloc_gap < 1e-9 && row.r_gap < 1e-12);
    }
}

#[test]
fn wealth_family_on_mixed_agents() {
    let d = fixture("fix_d");
    let fam = PerturbationFamily::geometric(FamilyKind::Wealth, d.agents.clone(), 12);
    let r = run_stability_sweep(&fam, &d.market, &d.bundle, &d.solver).unwrap();
    let last = r.last().unwrap();
    assert_eq!(last.m, 11);
    assert!(last.price_gap < 1e-3 && last.alloc_gap < 1e-3);
    assert!(r.rows[0].price_gap > last.price_gap);
    assert!(r.tails_decrease(3, 1e-9));
}

#[test]
fn weights_halve_and_probabilities_mix() {
    let c = fixture("fix_c");
    let fam = PerturbationFamily::geometric(FamilyKind::Probs { target: ramp_distribution(4) }, c.agents.clone(), 3);
    assert_eq!(fam.weights, vec![1.0, 0.5, 0.25]);
    let (m1, _) = fam.at(&c.market, 1).unwrap();
    let want = [0.175, 0.225, 0.275, 0.325];
    assert!(sup_diff(m1.probs(), &want) < 1e-15);
}

#[test]
fn sweeps_are_deterministic() {
    let c = fixture("fix_c");
    let fam = PerturbationFamily::geometric(FamilyKind::Endowment, c.agents.clone(), 8);
    let a = run_stability_sweep(&fam, &c.market, &c.bundle, &SolverConfig::default()).unwrap();
    let b = run_stability_sweep(&fam, &c.market, &c.bundle, &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}

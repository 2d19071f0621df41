mod common;

use common::*;
use equilibria::oracle::{pepa_grid_search, rho_dual_grid, rho_primal_grid, GridSpec, OracleRho};
use equilibria::risk::rho;
use equilibria::Error;

#[test]
fn primal_grid_brackets_the_solver() {
    let b = fixture("fix_b");
    let mut rng = rng(31);
    for model in &b.agents {
        for _ in 0..3 {
            let x = random_claim(&mut rng, 4, 1.0);
            let exact = rho(model, &b.market, &x).unwrap().value;
            let grid = rho_primal_grid(model, &b.market, &x, &GridSpec::cube(1, -3.0, 3.0, 1e-3), 1e-4).unwrap();
            assert!((grid - exact).abs() < 5e-3, "{grid} vs {exact}");
        }
    }
}

#[test]
fn golden_section_oracle_matches() {
    let d = fixture("fix_d");
    let mut rng = rng(32);
    for model in &d.agents {
        let o = OracleRho::new(model, &d.market).unwrap();
        let x = random_claim(&mut rng, 6, 1.0);
        let exact = rho(model, &d.market, &x).unwrap().value;
        assert!((o.rho(&x) - exact).abs() < 1e-5);
    }
}

#[test]
fn dual_grid_for_two_states() {
    let a = fixture("fix_a");
    let x = [0.3, -0.8];
    for model in &a.agents {
        let exact = rho(model, &a.market, &x).unwrap().value;
        assert!((rho_dual_grid(model, &a.market, &x, 1e-4).unwrap() - exact).abs() < 1e-4);
    }
}

#[test]
fn grid_search_reports_boundary_minima() {
    let c = fixture("fix_c");
    let r = pepa_grid_search(&c.agents, &c.market, &c.bundle, &GridSpec::cube(1, 0.0, 1.0, 1e-2));
    assert!(matches!(r, Err(Error::MinimumOnBoundary)));
    let d = fixture("fix_d");
    assert!(matches!(
        pepa_grid_search(&d.agents, &d.market, &d.bundle, &GridSpec::cube(4, -1.0, 1.0, 0.1)),
        Err(Error::GridTooCoarse(_))
    ));
}

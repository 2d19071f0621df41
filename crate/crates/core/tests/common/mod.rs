#![allow(dead_code)]

use std::path::PathBuf;

use equilibria::io::{load_model, LoadedModel};
use equilibria::market::{Claim, FiniteMarket};
use equilibria::risk::RiskModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

pub fn fixture(name: &str) -> LoadedModel {
    load_model(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..=r)).collect()
}

pub fn random_claim(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Claim {
    Claim(uniform_vec(rng, n, r))
}

pub fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Every agent of the named fixtures together with its market.
pub fn agents_of(names: &[&str]) -> Vec<(String, FiniteMarket, RiskModel)> {
    names
        .iter()
        .flat_map(|n| {
            let m = fixture(n);
            m.agents
                .iter()
                .zip(&m.agent_names)
                .map(|(a, an)| (format!("{n}/{an}"), m.market.clone(), a.clone()))
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

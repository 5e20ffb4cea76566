#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use qf_core::equilibrium::{Valuation, ValuationFamily};
use qf_core::ProjectLedger;

pub fn random_amounts(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

pub fn random_ledger(rng: &mut ChaCha8Rng, max_n: usize, lo: f64, hi: f64) -> ProjectLedger {
    let n = rng.gen_range(1..=max_n);
    ProjectLedger::from_amounts("p", &random_amounts(rng, n, lo, hi)).unwrap()
}

/// 2–5 backers over 1–3 projects; every backer values at least one project.
pub fn random_valuations(rng: &mut ChaCha8Rng) -> Vec<Valuation> {
    let contributors = rng.gen_range(2..=5);
    let projects = rng.gen_range(1..=3);
    let mut out = Vec::new();
    for i in 0..contributors {
        let first = rng.gen_range(0..projects);
        for p in 0..projects {
            if p != first && !rng.gen_bool(0.5) {
                continue;
            }
            let family = if rng.gen_bool(0.5) {
                ValuationFamily::Sqrt
            } else {
                ValuationFamily::Log
            };
            let scale = rng.gen_range(1.0..=10.0);
            out.push(Valuation::new(format!("c{i}"), format!("p{p}"), family, scale).unwrap());
        }
    }
    out
}

/// Prints one PASS/FAIL line, then fails the test on FAIL.
pub fn verdict(id: u32, name: &str, ok: bool, detail: String) {
    println!("criterion {id:>2} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

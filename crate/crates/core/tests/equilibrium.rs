use std::collections::BTreeMap;

use qf_core::equilibrium::{best_response, planner_optimum, SolverOptions, Valuation, ValuationFamily};
use qf_core::{ContributorId, ProjectId};

fn symmetric(n: usize, family: ValuationFamily, v: f64) -> Vec<Valuation> {
    (0..n)
        .map(|i| Valuation::new(format!("c{i}"), "p", family, v).unwrap())
        .collect()
}

/// B = n/k + 1 − 1/k, the slope dF/dc at a symmetric profile.
fn slope(n: usize, k: f64) -> f64 {
    n as f64 / k + 1.0 - 1.0 / k
}

#[test]
fn symmetric_sqrt_matches_closed_form() {
    for n in 2..=6 {
        for k in [1.0, 1.5, 3.0, 10.0, 50.0] {
            let eq = best_response(&symmetric(n, ValuationFamily::Sqrt, 4.0), k, None, &SolverOptions::default()).unwrap();
            let expected = 16.0 * slope(n, k) / (4.0 * n as f64);
            for e in &eq.contributions {
                assert!((e.amount - expected).abs() < 1e-9 * expected, "n={n} k={k}: {} vs {expected}", e.amount);
            }
        }
    }
}

#[test]
fn symmetric_log_matches_closed_form() {
    for n in 2..=6 {
        for k in [1.0, 2.0, 8.0, 30.0] {
            let eq = best_response(&symmetric(n, ValuationFamily::Log, 6.0), k, None, &SolverOptions::default()).unwrap();
            let expected = (6.0 - 1.0 / slope(n, k)) / n as f64;
            for e in &eq.contributions {
                assert!((e.amount - expected).abs() < 1e-9 * expected, "n={n} k={k}: {} vs {expected}", e.amount);
            }
        }
    }
}

#[test]
fn symmetric_contributions_fall_with_k() {
    let ks: Vec<f64> = (0..20).map(|i| 1.0 + f64::from(i)).collect();
    for family in [ValuationFamily::Sqrt, ValuationFamily::Log] {
        for n in 2..=5 {
            let path: Vec<f64> = ks
                .iter()
                .map(|&k| {
                    best_response(&symmetric(n, family, 5.0), k, None, &SolverOptions::default())
                        .unwrap()
                        .contributions[0]
                        .amount
                })
                .collect();
            assert!(path.windows(2).all(|w| w[1] <= w[0]), "{family:?} n={n}: {path:?}");
        }
    }
}

#[test]
fn heterogeneous_backers_can_raise_contributions_with_k() {
    // A strong and a weak backer. The weak one free-rides more as k grows and the
    // strong one moves toward private provision.
    let vals = vec![
        Valuation::new("strong", "p", ValuationFamily::Sqrt, 6.0).unwrap(),
        Valuation::new("weak", "p", ValuationFamily::Sqrt, 1.0).unwrap(),
    ];
    let strong = |k: f64| {
        best_response(&vals, k, None, &SolverOptions::default())
            .unwrap()
            .amount(&ContributorId::from("strong"), &ProjectId::from("p"))
    };
    assert!(strong(20.0) > strong(2.0));
}

#[test]
fn binding_budget_is_spent_exactly() {
    let vals = vec![
        Valuation::new("a", "p", ValuationFamily::Sqrt, 10.0).unwrap(),
        Valuation::new("a", "q", ValuationFamily::Sqrt, 10.0).unwrap(),
        Valuation::new("b", "p", ValuationFamily::Sqrt, 3.0).unwrap(),
    ];
    let budgets = BTreeMap::from([(ContributorId::from("a"), 5.0), (ContributorId::from("b"), 100.0)]);
    let eq = best_response(&vals, 2.0, Some(&budgets), &SolverOptions::default()).unwrap();
    assert!(eq.converged);
    let spent: f64 = eq
        .contributions
        .iter()
        .filter(|e| e.contributor_id.as_str() == "a")
        .map(|e| e.amount)
        .sum();
    assert!((spent - 5.0).abs() < 1e-9);
    assert!(eq.contributions.iter().filter(|e| e.contributor_id.as_str() == "a").all(|e| e.clamped));
    assert!(eq.max_interior_residual(&vals) < 1e-8);
}

#[test]
fn sqrt_planner_splits_by_squared_valuation_sums() {
    let vals = vec![
        Valuation::new("a", "p", ValuationFamily::Sqrt, 1.0).unwrap(),
        Valuation::new("b", "p", ValuationFamily::Sqrt, 2.0).unwrap(),
        Valuation::new("a", "q", ValuationFamily::Sqrt, 1.0).unwrap(),
    ];
    let plan = planner_optimum(&vals, 100.0).unwrap();
    // Σ V' equalized: F_p ∝ (Σ v)².
    assert!((plan.funds[&ProjectId::from("p")] - 90.0).abs() < 1e-9);
    assert!((plan.funds[&ProjectId::from("q")] - 10.0).abs() < 1e-9);
}

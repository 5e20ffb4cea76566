use proptest::prelude::*;

use qf_core::concentration::{decomposed_match, max_match, share_profile};
use qf_core::efficiency::{lambda_lower_bound, lambda_p};
use qf_core::funding::{compute_k, cqf_allocate, marginal_match, matching_requirement, qf_target};
use qf_core::ledger::{read_contributions, write_contributions_to};
use qf_core::strategy::{alpha_double_star, alpha_star, ring_payoff};
use qf_core::{Contribution, ProjectLedger, SurplusPolicy};

fn amounts(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1000.0, 1..=max_n)
}

fn ledger(a: &[f64]) -> ProjectLedger {
    ProjectLedger::from_amounts("p", a).unwrap()
}

fn pair_sum(a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if i != j {
                s += (a[i] * a[j]).sqrt();
            }
        }
    }
    s
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn requirement_is_the_pair_sum(a in amounts(20)) {
        prop_assert!(close(matching_requirement(&ledger(&a)), pair_sum(&a), 1e-12));
    }

    #[test]
    fn target_is_private_plus_requirement(a in amounts(20)) {
        let l = ledger(&a);
        prop_assert!(close(qf_target(&l), l.total() + matching_requirement(&l), 1e-12));
    }

    #[test]
    fn marginal_match_is_the_increment(a in amounts(15), extra in 0.01f64..1000.0) {
        let before = matching_requirement(&ledger(&a));
        let mut grown = a.clone();
        grown.push(extra);
        let after = matching_requirement(&ledger(&grown));
        prop_assert!(close(marginal_match(&ledger(&a), extra).unwrap(), after - before, 1e-10));
    }

    #[test]
    fn requirement_grows_with_any_top_up(a in amounts(15), i in any::<prop::sample::Index>(), extra in 0.0f64..100.0) {
        let mut b = a.clone();
        let j = i.index(b.len());
        b[j] += extra;
        prop_assert!(matching_requirement(&ledger(&b)) >= matching_requirement(&ledger(&a)) * (1.0 - 1e-12));
    }

    #[test]
    fn same_backer_amounts_are_aggregated(a in 0.01f64..100.0, b in 0.01f64..100.0, other in 0.01f64..100.0) {
        let mut split = ProjectLedger::new("p", "c");
        for (who, amt) in [("x", a), ("x", b), ("y", other)] {
            split.push(Contribution::new(0, "c", "p", who, amt)).unwrap();
        }
        let merged = ledger(&[a + b, other]);
        prop_assert!(close(matching_requirement(&split), matching_requirement(&merged), 1e-12));
    }

    #[test]
    fn decomposition_matches_requirement(a in amounts(20)) {
        let l = ledger(&a);
        let p = share_profile(&l).unwrap();
        let n = p.n as f64;
        prop_assert!(close(p.hhi, n * p.variance + n * p.mean * p.mean, 1e-12));
        prop_assert!(close(decomposed_match(&l).unwrap(), matching_requirement(&l), 1e-10));
    }

    #[test]
    fn even_split_maximizes_requirement(a in amounts(12)) {
        let total: f64 = a.iter().sum();
        let even = vec![total / a.len() as f64; a.len()];
        prop_assert!(matching_requirement(&ledger(&a)) <= matching_requirement(&ledger(&even)) * (1.0 + 1e-12));
        prop_assert!(matching_requirement(&ledger(&a)) <= max_match(&a).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn lambda_bounds_and_shape(a in amounts(12), k1 in 1.0f64..200.0, k2 in 1.0f64..200.0) {
        let l = ledger(&a);
        let n = l.contributor_count() as f64;
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        let (lam_lo, lam_hi) = (lambda_p(&l, lo).unwrap(), lambda_p(&l, hi).unwrap());
        prop_assert!(lam_lo >= 1.0 - 1e-12 && lam_hi <= n + 1e-9);
        prop_assert!(lam_hi >= lam_lo - 1e-12);
        prop_assert!(lam_lo >= lambda_lower_bound(&l, lo).unwrap() - 1e-12);
        // concave in k
        let mid = 0.5 * (lo + hi);
        prop_assert!(lambda_p(&l, mid).unwrap() >= 0.5 * (lam_lo + lam_hi) - 1e-9);
    }

    #[test]
    fn even_split_maximizes_lambda(a in amounts(12), k in 1.0f64..100.0) {
        let total: f64 = a.iter().sum();
        let even = vec![total / a.len() as f64; a.len()];
        prop_assert!(lambda_p(&ledger(&a), k).unwrap() <= lambda_p(&ledger(&even), k).unwrap() + 1e-9);
    }

    #[test]
    fn allocation_spends_the_pool(projects in prop::collection::vec(amounts(8), 1..6), pool in 1.0f64..1e6) {
        let ledgers: Vec<ProjectLedger> = projects
            .iter()
            .enumerate()
            .map(|(i, a)| ProjectLedger::from_amounts(format!("p{i}"), a).unwrap())
            .collect();
        prop_assume!(ledgers.iter().any(|l| matching_requirement(l) > 0.0));
        let alloc = cqf_allocate(&ledgers, pool, SurplusPolicy::Literal).unwrap();
        let paid: f64 = alloc.outcomes.iter().map(|(_, o)| o.m_actual).sum();
        prop_assert!((paid - pool).abs() <= 1e-9 * pool);
        let capped = cqf_allocate(&ledgers, pool, SurplusPolicy::CapAtTarget).unwrap();
        for ((_, o), l) in capped.outcomes.iter().zip(&ledgers) {
            prop_assert!(o.m_actual <= o.m_qf * (1.0 + 1e-12));
            prop_assert!(o.f_actual >= l.total());
        }
        let k2 = compute_k(&ledgers, pool * 1.25).unwrap();
        prop_assert!(close(k2 / alloc.pool.k, 0.8, 1e-12));
    }

    #[test]
    fn collusion_threshold_shape(n in 2u32..200, k in 1.0f64..1000.0, dk in 0.0f64..100.0) {
        let a = alpha_double_star(n, k).unwrap();
        prop_assert!(a >= alpha_star(n).unwrap() - 1e-12 && a < 1.0);
        prop_assert!(alpha_double_star(n, k + dk).unwrap() >= a - 1e-12);
        prop_assert!(alpha_double_star(n + 1, k).unwrap() <= a + 1e-12);
        prop_assert!(ring_payoff(n, a, k, 1.0).unwrap().abs() <= 1e-9);
        if a < 0.99 {
            prop_assert!(ring_payoff(n, a + 0.01, k, 1.0).unwrap() > 0.0);
        }
        prop_assert!(ring_payoff(n, a * 0.99, k, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn contributions_round_trip(rows in prop::collection::vec(
        (0u32..60, "[a-z]{1,6}", "[a-z0-9_-]{1,8}", "[a-z0-9]{1,8}", 1e-6f64..1e9), 0..40)
    ) {
        let records: Vec<Contribution> = rows
            .into_iter()
            .map(|(d, c, p, who, amt)| Contribution::new(d, c, p, who, amt))
            .collect();
        let mut buf = Vec::new();
        write_contributions_to(&mut buf, &records).unwrap();
        let loaded = read_contributions(buf.as_slice(), std::path::Path::new("buf")).unwrap();
        prop_assert!(loaded.rejected.is_empty());
        prop_assert_eq!(loaded.records, records);
    }
}

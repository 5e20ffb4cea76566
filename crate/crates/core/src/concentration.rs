//! Concentration of a project's square-root contribution shares, and how the
//! correlation of backers' portfolios drives total matching requirements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funding::{qf_target, ProjectLedger};
use crate::ids::{ContributorId, ProjectId};

const SHARE_TOLERANCE: f64 = 1e-9;

/// α_i = √c_i / Σ√c_i for each contributor, with the HHI and the population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareProfile {
    pub alphas: Vec<f64>,
    pub n: usize,
    pub hhi: f64,
    pub variance: f64,
    pub mean: f64,
}

pub fn share_profile(ledger: &ProjectLedger) -> Result<ShareProfile> {
    let amounts = ledger.amounts();
    if amounts.is_empty() {
        return Err(Error::domain(format!(
            "project `{}` has no positive contributions",
            ledger.project_id()
        )));
    }
    let s = ledger.sqrt_sum();
    let alphas: Vec<f64> = amounts.iter().map(|c| c.sqrt() / s).collect();
    Ok(profile_from_alphas(alphas))
}

fn profile_from_alphas(alphas: Vec<f64>) -> ShareProfile {
    let n = alphas.len();
    let mean = 1.0 / n as f64;
    let hhi = alphas.iter().map(|a| a * a).sum();
    let variance = alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    ShareProfile {
        alphas,
        n,
        hhi,
        variance,
        mean,
    }
}

/// M_QF written as `(1 − nσ² − nᾱ²) F_QF`.
pub fn decomposed_match(ledger: &ProjectLedger) -> Result<f64> {
    let p = share_profile(ledger)?;
    let n = p.n as f64;
    Ok((1.0 - n * p.variance - n * p.mean * p.mean) * qf_target(ledger))
}

fn pair_sum(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            acc += (a * b).sqrt();
        }
    }
    2.0 * acc
}

/// Required match when every backer puts its whole budget into the same project.
/// An empty budget list needs no match.
pub fn max_match(budgets: &[f64]) -> Result<f64> {
    if let Some(bad) = budgets.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
        return Err(Error::domain(format!("budgets must be positive, got {bad}")));
    }
    Ok(pair_sum(budgets))
}

/// A backer with budget `m_i` split over projects by shares `s_i^p` summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetedContributor {
    pub contributor_id: ContributorId,
    pub budget: f64,
    pub shares: BTreeMap<ProjectId, f64>,
}

impl BudgetedContributor {
    pub fn new(
        contributor_id: impl Into<ContributorId>,
        budget: f64,
        shares: impl IntoIterator<Item = (ProjectId, f64)>,
    ) -> Result<Self> {
        let c = Self {
            contributor_id: contributor_id.into(),
            budget,
            shares: shares.into_iter().collect(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::domain(format!(
                "budget of `{}` must be positive",
                self.contributor_id
            )));
        }
        if self.shares.values().any(|s| !(*s >= 0.0)) {
            return Err(Error::domain(format!(
                "shares of `{}` must be nonnegative",
                self.contributor_id
            )));
        }
        let total: f64 = self.shares.values().sum();
        if (total - 1.0).abs() > SHARE_TOLERANCE {
            return Err(Error::domain(format!(
                "shares of `{}` sum to {total}, expected 1",
                self.contributor_id
            )));
        }
        Ok(())
    }
}

/// Σ_p 2 Σ_{i<j} √(s_i^p m_i s_j^p m_j): the total match required by a portfolio split.
pub fn total_match_for_shares(contributors: &[BudgetedContributor]) -> Result<f64> {
    let mut per_project: BTreeMap<&ProjectId, Vec<f64>> = BTreeMap::new();
    for c in contributors {
        c.validate()?;
        for (p, s) in &c.shares {
            per_project.entry(p).or_default().push(s * c.budget);
        }
    }
    Ok(per_project.values().map(|amounts| pair_sum(amounts)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger(amounts: &[f64]) -> ProjectLedger {
        ProjectLedger::from_amounts("p", amounts).unwrap()
    }

    fn shares(pairs: &[(&str, f64)]) -> Vec<(ProjectId, f64)> {
        pairs.iter().map(|(p, s)| (ProjectId::from(*p), *s)).collect()
    }

    #[test]
    fn share_profile_examples() {
        let p = share_profile(&ledger(&[1.0, 1.0])).unwrap();
        assert_eq!(p.alphas, vec![0.5, 0.5]);
        assert_eq!(p.hhi, 0.5);
        assert_eq!(p.variance, 0.0);

        let p = share_profile(&ledger(&[1.0, 4.0])).unwrap();
        assert!((p.alphas[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.alphas[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.hhi - 5.0 / 9.0).abs() < 1e-15);
        assert!((p.variance - 1.0 / 36.0).abs() < 1e-15);

        assert_eq!(share_profile(&ledger(&[7.0])).unwrap().hhi, 1.0);
        assert!(share_profile(&ledger(&[])).is_err());
    }

    #[test]
    fn hhi_variance_identity() {
        let p = share_profile(&ledger(&[2.0, 3.0, 11.0, 0.25])).unwrap();
        let n = p.n as f64;
        assert!((p.hhi - (n * p.variance + n * p.mean * p.mean)).abs() < 1e-12);
        assert!((p.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decomposed_match_examples() {
        assert!((decomposed_match(&ledger(&[1.0, 4.0])).unwrap() - 4.0).abs() < 1e-12);
        assert!((decomposed_match(&ledger(&[1.0; 4])).unwrap() - 12.0).abs() < 1e-12);
        assert!(decomposed_match(&ledger(&[1.0])).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hhi_lower_bound_attained_only_by_equal_amounts() {
        let equal = share_profile(&ledger(&[3.0; 5])).unwrap();
        assert!((equal.hhi - 0.2).abs() < 1e-15);
        let unequal = share_profile(&ledger(&[3.0, 3.0, 3.0, 3.0, 3.5])).unwrap();
        assert!(unequal.hhi > 0.2);
    }

    #[test]
    fn max_match_examples() {
        assert_eq!(max_match(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(max_match(&[]).unwrap(), 0.0);
        assert!(max_match(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn total_match_examples() {
        let both_half = [
            BudgetedContributor::new("a", 1.0, shares(&[("x", 0.5), ("y", 0.5)])).unwrap(),
            BudgetedContributor::new("b", 1.0, shares(&[("x", 0.5), ("y", 0.5)])).unwrap(),
        ];
        assert!((total_match_for_shares(&both_half).unwrap() - 2.0).abs() < 1e-12);

        let disjoint = [
            BudgetedContributor::new("a", 1.0, shares(&[("x", 1.0), ("y", 0.0)])).unwrap(),
            BudgetedContributor::new("b", 1.0, shares(&[("x", 0.0), ("y", 1.0)])).unwrap(),
        ];
        assert_eq!(total_match_for_shares(&disjoint).unwrap(), 0.0);

        let anti = [
            BudgetedContributor::new("a", 1.0, shares(&[("x", 0.9), ("y", 0.1)])).unwrap(),
            BudgetedContributor::new("b", 1.0, shares(&[("x", 0.1), ("y", 0.9)])).unwrap(),
        ];
        assert!((total_match_for_shares(&anti).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn shares_must_sum_to_one() {
        let err = BudgetedContributor::new("a", 1.0, shares(&[("x", 0.5), ("y", 0.4)]));
        assert!(matches!(err, Err(Error::Domain(_))));
        let mut c = BudgetedContributor::new("a", 1.0, shares(&[("x", 1.0)])).unwrap();
        c.shares.insert(ProjectId::from("y"), 0.3);
        assert!(total_match_for_shares(&[c]).is_err());
    }
}

//! The quadratic funding rule and its capital-constrained variant.
//!
//! A project's QF target is `(Σ √c_i)²` over its backers' (aggregated) amounts.
//! The matching requirement is the target minus the private contributions. When a
//! category's pool `D` cannot cover the sum of requirements, every requirement is
//! scaled by `1/k` with `k = Σ M_QF / D`, so the pool is exhausted exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{CategoryId, ContributorId, ProjectId};

/// One contribution record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub day: u32,
    pub category: CategoryId,
    pub project_id: ProjectId,
    pub contributor_id: ContributorId,
    pub amount: f64,
}

impl Contribution {
    pub fn new(
        day: u32,
        category: impl Into<CategoryId>,
        project_id: impl Into<ProjectId>,
        contributor_id: impl Into<ContributorId>,
        amount: f64,
    ) -> Self {
        Self {
            day,
            category: category.into(),
            project_id: project_id.into(),
            contributor_id: contributor_id.into(),
            amount,
        }
    }
}

/// Per-project aggregate. Amounts from the same contributor are summed before any
/// square root is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectLedger {
    project_id: ProjectId,
    category: CategoryId,
    contributions: Vec<Contribution>,
    per_contributor: BTreeMap<ContributorId, f64>,
    sqrt_sum: f64,
    total: f64,
}

impl ProjectLedger {
    pub fn new(project_id: impl Into<ProjectId>, category: impl Into<CategoryId>) -> Self {
        Self {
            project_id: project_id.into(),
            category: category.into(),
            contributions: Vec::new(),
            per_contributor: BTreeMap::new(),
            sqrt_sum: 0.0,
            total: 0.0,
        }
    }

    /// Builds a ledger where each amount comes from a distinct contributor (`c0`, `c1`, ...).
    pub fn from_amounts(project_id: impl Into<ProjectId>, amounts: &[f64]) -> Result<Self> {
        let mut ledger = Self::new(project_id, "default");
        for (i, &amount) in amounts.iter().enumerate() {
            let c = Contribution {
                day: 0,
                category: ledger.category.clone(),
                project_id: ledger.project_id.clone(),
                contributor_id: ContributorId(format!("c{i}")),
                amount,
            };
            ledger.push(c)?;
        }
        Ok(ledger)
    }

    /// Groups contributions by project. Category is taken from each project's first record;
    /// a project listed under two categories is an error.
    pub fn group(contributions: &[Contribution]) -> Result<Vec<ProjectLedger>> {
        let mut by_project: BTreeMap<ProjectId, ProjectLedger> = BTreeMap::new();
        for c in contributions {
            let ledger = by_project
                .entry(c.project_id.clone())
                .or_insert_with(|| ProjectLedger::new(c.project_id.clone(), c.category.clone()));
            if ledger.category != c.category {
                return Err(Error::domain(format!(
                    "project `{}` appears in categories `{}` and `{}`",
                    c.project_id, ledger.category, c.category
                )));
            }
            ledger.push(c.clone())?;
        }
        Ok(by_project.into_values().collect())
    }

    pub fn push(&mut self, contribution: Contribution) -> Result<()> {
        if contribution.project_id != self.project_id {
            return Err(Error::domain(format!(
                "contribution for `{}` pushed into ledger of `{}`",
                contribution.project_id, self.project_id
            )));
        }
        if !contribution.amount.is_finite() || contribution.amount < 0.0 {
            return Err(Error::domain(format!(
                "amount must be finite and nonnegative, got {}",
                contribution.amount
            )));
        }
        *self
            .per_contributor
            .entry(contribution.contributor_id.clone())
            .or_insert(0.0) += contribution.amount;
        self.contributions.push(contribution);
        self.refresh();
        Ok(())
    }

    fn refresh(&mut self) {
        self.sqrt_sum = self.per_contributor.values().map(|c| c.sqrt()).sum();
        self.total = self.per_contributor.values().sum();
    }

    pub fn project_id(&self) -> &ProjectId {
        &self.project_id
    }

    pub fn category(&self) -> &CategoryId {
        &self.category
    }

    pub fn contributions(&self) -> &[Contribution] {
        &self.contributions
    }

    /// Aggregated positive amount per contributor, in contributor-id order.
    pub fn contributor_amounts(&self) -> impl Iterator<Item = (&ContributorId, f64)> + '_ {
        self.per_contributor
            .iter()
            .filter(|(_, &a)| a > 0.0)
            .map(|(id, &a)| (id, a))
    }

    pub fn amounts(&self) -> Vec<f64> {
        self.contributor_amounts().map(|(_, a)| a).collect()
    }

    pub fn contributor_count(&self) -> usize {
        self.contributor_amounts().count()
    }

    /// Σ √c_i over aggregated contributors.
    pub fn sqrt_sum(&self) -> f64 {
        self.sqrt_sum
    }

    /// C^p, the sum of private contributions.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.contributor_count() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// Unconstrained QF funding target.
    pub f_qf: f64,
    /// Unconstrained QF matching requirement.
    pub m_qf: f64,
    /// Match actually paid from the pool.
    pub m_actual: f64,
    /// Private contributions plus the match actually paid.
    pub f_actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub category: CategoryId,
    pub pool: f64,
    pub k: f64,
}

/// What to do when the pool exceeds the total matching requirement (k < 1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurplusPolicy {
    /// Apply `M = M_QF / k` even for k < 1, scaling matches up until the pool is spent.
    #[default]
    Literal,
    /// Never pay more than `M_QF`; the remainder of the pool is left unspent.
    CapAtTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub pool: PoolState,
    pub outcomes: Vec<(ProjectId, MatchOutcome)>,
    pub unspent: f64,
    pub policy: SurplusPolicy,
}

impl Allocation {
    /// The k that actually scaled the matches: `max(k, 1)` under `CapAtTarget`.
    pub fn effective_k(&self) -> f64 {
        match self.policy {
            SurplusPolicy::Literal => self.pool.k,
            SurplusPolicy::CapAtTarget => self.pool.k.max(1.0),
        }
    }
}

/// F_QF = (Σ √c_i)².
pub fn qf_target(ledger: &ProjectLedger) -> f64 {
    let s = ledger.sqrt_sum();
    s * s
}

/// M_QF = F_QF − C.
pub fn matching_requirement(ledger: &ProjectLedger) -> f64 {
    // (Σ√c)² − Σc is off by a few ulps for a lone backer; the pair sum is empty there.
    if ledger.contributor_count() < 2 {
        return 0.0;
    }
    (qf_target(ledger) - ledger.total()).max(0.0)
}

/// Extra match required when a new, distinct contributor adds `new_amount`.
pub fn marginal_match(ledger: &ProjectLedger, new_amount: f64) -> Result<f64> {
    if !(new_amount > 0.0) || !new_amount.is_finite() {
        return Err(Error::domain(format!(
            "new contribution must be positive, got {new_amount}"
        )));
    }
    Ok(2.0 * new_amount.sqrt() * ledger.sqrt_sum())
}

fn check_pool(pool: f64) -> Result<()> {
    if pool > 0.0 && pool.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("pool must be positive, got {pool}")))
    }
}

fn category_label(ledgers: &[ProjectLedger]) -> String {
    ledgers
        .first()
        .map(|l| l.category().to_string())
        .unwrap_or_default()
}

/// k = Σ_p M_QF / D.
pub fn compute_k(ledgers: &[ProjectLedger], pool: f64) -> Result<f64> {
    check_pool(pool)?;
    let required: f64 = ledgers.iter().map(matching_requirement).sum();
    if required <= 0.0 {
        return Err(Error::NoMatchableProjects(category_label(ledgers)));
    }
    Ok(required / pool)
}

/// Capital-constrained QF over the projects of one category.
pub fn cqf_allocate(
    ledgers: &[ProjectLedger],
    pool: f64,
    policy: SurplusPolicy,
) -> Result<Allocation> {
    let k = compute_k(ledgers, pool)?;
    let required: f64 = ledgers.iter().map(matching_requirement).sum();
    let scale = match policy {
        SurplusPolicy::CapAtTarget if k < 1.0 => 1.0,
        _ => pool / required,
    };

    let outcomes: Vec<_> = ledgers
        .iter()
        .map(|l| {
            let m_qf = matching_requirement(l);
            let m_actual = m_qf * scale;
            let outcome = MatchOutcome {
                f_qf: m_qf + l.total(),
                m_qf,
                m_actual,
                f_actual: m_actual + l.total(),
            };
            (l.project_id().clone(), outcome)
        })
        .collect();

    let paid: f64 = outcomes.iter().map(|(_, o)| o.m_actual).sum();
    let category = ledgers
        .first()
        .map(|l| l.category().clone())
        .unwrap_or_else(|| CategoryId::new(""));
    Ok(Allocation {
        pool: PoolState { category, pool, k },
        outcomes,
        unspent: (pool - paid).max(0.0),
        policy,
    })
}

//! Round-level allocation report: CQF per category plus λ_p per project.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::efficiency::lambda_p;
use crate::error::{Error, Result};
use crate::funding::{cqf_allocate, matching_requirement, Contribution, ProjectLedger, SurplusPolicy};
use crate::ids::{CategoryId, ProjectId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub project_id: ProjectId,
    pub category: CategoryId,
    pub contributors: usize,
    pub total: f64,
    pub f_qf: f64,
    pub m_qf: f64,
    pub m_actual: f64,
    pub f_actual: f64,
    /// `None` for projects without contributors, or when the category has no k.
    pub lambda_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: CategoryId,
    pub pool: f64,
    /// Σ M_QF / pool; `None` when nothing in the category is matchable.
    pub k: Option<f64>,
    /// The k used for the scaling and for λ_p (differs from `k` only when capped).
    pub effective_k: Option<f64>,
    pub required_match: f64,
    pub paid_match: f64,
    pub unspent: f64,
    pub projects: Vec<ProjectReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub policy: SurplusPolicy,
    /// λ_p is evaluated at the final category k.
    pub k_basis: String,
    pub categories: Vec<CategoryReport>,
}

impl AllocationReport {
    pub fn unmatchable_categories(&self) -> Vec<&CategoryId> {
        self.categories
            .iter()
            .filter(|c| c.k.is_none())
            .map(|c| &c.category)
            .collect()
    }

    pub fn project(&self, id: &ProjectId) -> Option<&ProjectReport> {
        self.categories
            .iter()
            .flat_map(|c| &c.projects)
            .find(|p| &p.project_id == id)
    }
}

fn category_report(
    category: &CategoryId,
    pool: f64,
    ledgers: &[ProjectLedger],
    policy: SurplusPolicy,
) -> Result<CategoryReport> {
    let required: f64 = ledgers.iter().map(matching_requirement).sum();
    if required <= 0.0 {
        let projects = ledgers
            .iter()
            .map(|l| ProjectReport {
                project_id: l.project_id().clone(),
                category: category.clone(),
                contributors: l.contributor_count(),
                total: l.total(),
                f_qf: l.total(),
                m_qf: 0.0,
                m_actual: 0.0,
                f_actual: l.total(),
                lambda_p: None,
            })
            .collect();
        return Ok(CategoryReport {
            category: category.clone(),
            pool,
            k: None,
            effective_k: None,
            required_match: 0.0,
            paid_match: 0.0,
            unspent: pool,
            projects,
        });
    }

    let alloc = cqf_allocate(ledgers, pool, policy)?;
    let k_eff = alloc.effective_k();
    let projects = ledgers
        .iter()
        .zip(&alloc.outcomes)
        .map(|(l, (_, o))| {
            Ok(ProjectReport {
                project_id: l.project_id().clone(),
                category: category.clone(),
                contributors: l.contributor_count(),
                total: l.total(),
                f_qf: o.f_qf,
                m_qf: o.m_qf,
                m_actual: o.m_actual,
                f_actual: o.f_actual,
                lambda_p: if l.is_empty() { None } else { Some(lambda_p(l, k_eff)?) },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CategoryReport {
        category: category.clone(),
        pool,
        k: Some(alloc.pool.k),
        effective_k: Some(k_eff),
        required_match: required,
        paid_match: pool - alloc.unspent,
        unspent: alloc.unspent,
        projects,
    })
}

/// Builds the report from ledgers. Every category with a ledger needs a pool;
/// categories with a pool and no projects are reported empty.
pub fn allocation_report(
    ledgers: &[ProjectLedger],
    pools: &BTreeMap<CategoryId, f64>,
    policy: SurplusPolicy,
) -> Result<AllocationReport> {
    let mut by_category: BTreeMap<&CategoryId, Vec<ProjectLedger>> = BTreeMap::new();
    for l in ledgers {
        if !pools.contains_key(l.category()) {
            return Err(Error::domain(format!(
                "no pool configured for category `{}`",
                l.category()
            )));
        }
        by_category.entry(l.category()).or_default().push(l.clone());
    }
    let categories = pools
        .iter()
        .map(|(cat, &pool)| {
            let ledgers = by_category.remove(cat).unwrap_or_default();
            category_report(cat, pool, &ledgers, policy)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AllocationReport {
        policy,
        k_basis: "final_category_k".into(),
        categories,
    })
}

pub fn allocation_report_from_contributions(
    contributions: &[Contribution],
    pools: &BTreeMap<CategoryId, f64>,
    policy: SurplusPolicy,
) -> Result<AllocationReport> {
    allocation_report(&ProjectLedger::group(contributions)?, pools, policy)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: `category,project_id,contributors,total,f_qf,m_qf,m_actual,f_actual,lambda_p,k`.
pub fn write_allocation_csv<W: Write>(writer: W, report: &AllocationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "category",
        "project_id",
        "contributors",
        "total",
        "f_qf",
        "m_qf",
        "m_actual",
        "f_actual",
        "lambda_p",
        "k",
    ])?;
    for c in &report.categories {
        for p in &c.projects {
            w.write_record([
                c.category.to_string(),
                p.project_id.to_string(),
                p.contributors.to_string(),
                p.total.to_string(),
                p.f_qf.to_string(),
                p.m_qf.to_string(),
                p.m_actual.to_string(),
                p.f_actual.to_string(),
                opt(p.lambda_p),
                opt(c.k),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<allocation>", e))?;
    Ok(())
}

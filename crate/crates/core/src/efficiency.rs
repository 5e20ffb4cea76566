//! The efficiency multiplier λ_p.
//!
//! Under CQF, each backer's first-order condition makes the sum of marginal
//! valuations on a project equal to
//! `λ_p = Σ_i [ 1/(k α_i) + (1 − 1/k) ]⁻¹`, with `α_i = √c_i / Σ√c_j`.
//! A planner would equalize this across projects; its spread across a category
//! measures how far the constrained allocation is from that.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funding::ProjectLedger;
use crate::ids::{CategoryId, ProjectId};

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("k must be positive, got {k}")))
    }
}

fn alphas(ledger: &ProjectLedger) -> Result<Vec<f64>> {
    let s = ledger.sqrt_sum();
    let alphas: Vec<f64> = ledger.amounts().iter().map(|c| c.sqrt() / s).collect();
    if alphas.is_empty() {
        return Err(Error::domain(format!(
            "project `{}` has no positive contributions",
            ledger.project_id()
        )));
    }
    Ok(alphas)
}

fn lambda_from_alphas(alphas: &[f64], k: f64) -> f64 {
    let inv_k = 1.0 / k;
    alphas
        .iter()
        .map(|a| 1.0 / (inv_k / a + (1.0 - inv_k)))
        .sum()
}

pub fn lambda_p(ledger: &ProjectLedger, k: f64) -> Result<f64> {
    check_k(k)?;
    Ok(lambda_from_alphas(&alphas(ledger)?, k))
}

/// `n² / ((1/k) Σ 1/α_i + n(1 − 1/k))`, tight when all shares are equal.
pub fn lambda_lower_bound(ledger: &ProjectLedger, k: f64) -> Result<f64> {
    check_k(k)?;
    let alphas = alphas(ledger)?;
    let n = alphas.len() as f64;
    let inv_sum: f64 = alphas.iter().map(|a| 1.0 / a).sum();
    Ok(n * n / (inv_sum / k + n * (1.0 - 1.0 / k)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub project_id: ProjectId,
    pub category: CategoryId,
    pub lambda_p: f64,
    pub lower_bound: f64,
    pub n: usize,
    pub k_used: f64,
}

pub fn lambda_report(ledger: &ProjectLedger, k: f64) -> Result<LambdaReport> {
    Ok(LambdaReport {
        project_id: ledger.project_id().clone(),
        category: ledger.category().clone(),
        lambda_p: lambda_p(ledger, k)?,
        lower_bound: lambda_lower_bound(ledger, k)?,
        n: ledger.contributor_count(),
        k_used: k,
    })
}

/// A contribution pattern written as a ratio, e.g. `1:15`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioProfile {
    pub label: String,
    pub amounts: Vec<f64>,
}

impl RatioProfile {
    /// The three two-backer projects: equal split, 1:2 and 1:15.
    pub fn defaults() -> Vec<RatioProfile> {
        ["1:1", "1:2", "1:15"]
            .iter()
            .map(|s| s.parse().expect("static profile"))
            .collect()
    }

    pub fn ledger(&self) -> Result<ProjectLedger> {
        ProjectLedger::from_amounts(self.label.as_str(), &self.amounts)
    }

    /// Parses a comma-separated list such as `1:1,1:2,1:15`.
    pub fn parse_list(s: &str) -> Result<Vec<RatioProfile>> {
        s.split(',').map(|p| p.trim().parse()).collect()
    }
}

impl FromStr for RatioProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let amounts = s
            .split(':')
            .map(|part| {
                part.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .ok_or_else(|| Error::domain(format!("bad ratio component `{part}` in `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if amounts.is_empty() {
            return Err(Error::domain(format!("empty ratio profile `{s}`")));
        }
        Ok(RatioProfile {
            label: s.trim().to_owned(),
            amounts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub profile_label: String,
    pub k: f64,
    pub lambda_p: f64,
}

/// `steps` evenly spaced points from `k_min` to `k_max` inclusive.
pub fn linear_k_grid(k_min: f64, k_max: f64, steps: usize) -> Result<Vec<f64>> {
    check_k(k_min)?;
    check_k(k_max)?;
    if steps == 0 || k_max < k_min {
        return Err(Error::domain("k grid needs steps >= 1 and k_max >= k_min"));
    }
    if steps == 1 {
        return Ok(vec![k_min]);
    }
    let h = (k_max - k_min) / (steps - 1) as f64;
    Ok((0..steps).map(|i| k_min + h * i as f64).collect())
}

/// λ_p for every (profile, k) pair, profile-major.
pub fn k_sweep(profiles: &[RatioProfile], k_grid: &[f64]) -> Result<Vec<SweepPoint>> {
    if k_grid.is_empty() {
        return Err(Error::domain("empty k grid"));
    }
    let mut out = Vec::with_capacity(profiles.len() * k_grid.len());
    for profile in profiles {
        let ledger = profile.ledger()?;
        for &k in k_grid {
            out.push(SweepPoint {
                profile_label: profile.label.clone(),
                k,
                lambda_p: lambda_p(&ledger, k)?,
            });
        }
    }
    Ok(out)
}

/// Columns: `profile_label,k,lambda_p`.
pub fn write_sweep_csv<W: Write>(writer: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionStats {
    pub category: CategoryId,
    pub mean: f64,
    /// Population standard deviation.
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
    pub project_count: usize,
}

pub fn dispersion(reports: &[LambdaReport], category: &CategoryId) -> Result<DispersionStats> {
    let values: Vec<f64> = reports
        .iter()
        .filter(|r| &r.category == category)
        .map(|r| r.lambda_p)
        .collect();
    if values.is_empty() {
        return Err(Error::domain(format!("no λ_p reports in category `{category}`")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(DispersionStats {
        category: category.clone(),
        mean,
        stdev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        project_count: values.len(),
    })
}

//! Contributor best responses under CQF and the planner benchmark.
//!
//! A backer `i` of project `p` chooses `c_i` to maximize `V_i(F) − c_i` where
//! `F = C + M_QF / k`, taking `k` and everyone else's contributions as given.
//! Writing `x = √c_i`, the marginal condition is
//! `V_i'(F) · ((1/k) S / x + 1 − 1/k) = 1` with `S` the project's Σ√c. The left
//! side is strictly decreasing in `x`, so each best response is a bisection.
//!
//! Projects are independent unless a backer's budget binds across them; a binding
//! budget is handled with a per-backer shadow price found by an outer bisection.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ContributorId, ProjectId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValuationFamily {
    /// V(F) = v √F
    Sqrt,
    /// V(F) = v ln(1 + F)
    Log,
}

impl FromStr for ValuationFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sqrt" => Ok(Self::Sqrt),
            "log" => Ok(Self::Log),
            other => Err(Error::domain(format!("unknown valuation family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub contributor_id: ContributorId,
    pub project_id: ProjectId,
    pub family: ValuationFamily,
    pub scale: f64,
}

impl Valuation {
    pub fn new(
        contributor_id: impl Into<ContributorId>,
        project_id: impl Into<ProjectId>,
        family: ValuationFamily,
        scale: f64,
    ) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::domain(format!("valuation scale must be positive, got {scale}")));
        }
        Ok(Self {
            contributor_id: contributor_id.into(),
            project_id: project_id.into(),
            family,
            scale,
        })
    }

    pub fn value(&self, funds: f64) -> f64 {
        let f = funds.max(0.0);
        match self.family {
            ValuationFamily::Sqrt => self.scale * f.sqrt(),
            ValuationFamily::Log => self.scale * f.ln_1p(),
        }
    }

    pub fn marginal(&self, funds: f64) -> f64 {
        let f = funds.max(0.0);
        match self.family {
            ValuationFamily::Sqrt => self.scale / (2.0 * f.sqrt()),
            ValuationFamily::Log => self.scale / (1.0 + f),
        }
    }
}

/// Σ√c and Σc of everyone on a project except the backer being optimized.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OthersOnProject {
    pub sqrt_sum: f64,
    pub total: f64,
}

/// F = C + M_QF / k when the backer adds `own` to a project.
pub fn funds_with(own: f64, others: OthersOnProject, k: f64) -> f64 {
    let x = own.sqrt();
    let others_match = (others.sqrt_sum * others.sqrt_sum - others.total).max(0.0);
    own + others.total + (others_match + 2.0 * others.sqrt_sum * x) / k
}

/// dF/dc_i at `own`; infinite at zero when others already contribute.
fn funds_slope(own: f64, others: OthersOnProject, k: f64) -> f64 {
    let x = own.sqrt();
    (others.sqrt_sum + x) / (k * x) + 1.0 - 1.0 / k
}

/// `V'(F) · dF/dc − 1`: zero at an interior optimum.
pub fn foc_residual(val: &Valuation, own: f64, others: OthersOnProject, k: f64) -> f64 {
    val.marginal(funds_with(own, others, k)) * funds_slope(own, others, k) - 1.0
}

/// Best response to `others` when a unit contributed costs `unit_cost` (1 plus any
/// budget shadow price). Returns zero when even the first cent is not worth it.
pub fn best_response_amount(
    val: &Valuation,
    others: OthersOnProject,
    k: f64,
    unit_cost: f64,
) -> f64 {
    let gain = |x: f64| -> f64 {
        let c = x * x;
        val.marginal(funds_with(c, others, k)) * funds_slope(c, others, k) - unit_cost
    };

    // As x → 0 the slope tends to 1 when nobody else contributes, and to ∞ otherwise.
    if others.sqrt_sum <= 0.0 && val.marginal(others.total) <= unit_cost {
        return 0.0;
    }

    let mut hi = 1.0_f64;
    while gain(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gain(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    x * x
}

/// Best responses of one backer across its projects, respecting an optional budget.
/// Returns the targets and whether the budget bound.
pub fn contributor_targets(
    projects: &[(&Valuation, OthersOnProject)],
    k: f64,
    budget: Option<f64>,
) -> (Vec<f64>, bool) {
    let at = |unit_cost: f64| -> Vec<f64> {
        projects
            .iter()
            .map(|(v, o)| best_response_amount(v, *o, k, unit_cost))
            .collect()
    };
    let free = at(1.0);
    let Some(budget) = budget else {
        return (free, false);
    };
    if free.iter().sum::<f64>() <= budget {
        return (free, false);
    }
    if budget <= 0.0 {
        return (vec![0.0; projects.len()], true);
    }

    // Spending is decreasing in the shadow price μ; bracket then bisect.
    let spend = |mu: f64| at(1.0 + mu).iter().sum::<f64>();
    let mut mu_hi = 1.0;
    while spend(mu_hi) > budget {
        mu_hi *= 2.0;
    }
    let mut mu_lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (mu_lo + mu_hi);
        if mid <= mu_lo || mid >= mu_hi {
            break;
        }
        if spend(mid) > budget {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
    }
    // μ_hi always satisfies the budget.
    (at(1.0 + mu_hi), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Weight on the new best response in each update.
    pub damping: f64,
    pub max_iter: usize,
    /// Stop when no contribution moves by more than `tolerance · max(1, c)`.
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iter: 10_000,
            tolerance: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionEntry {
    pub contributor_id: ContributorId,
    pub project_id: ProjectId,
    pub amount: f64,
    /// The backer's budget bound at the solution.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub k: f64,
    pub contributions: Vec<ContributionEntry>,
    pub funds: BTreeMap<ProjectId, f64>,
    /// Σ_i V_i'(F^p) over everyone who values the project.
    pub aggregate_marginal: BTreeMap<ProjectId, f64>,
    pub welfare: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EquilibriumResult {
    pub fn amount(&self, contributor: &ContributorId, project: &ProjectId) -> f64 {
        self.contributions
            .iter()
            .find(|e| &e.contributor_id == contributor && &e.project_id == project)
            .map_or(0.0, |e| e.amount)
    }

    pub fn private_total(&self, project: &ProjectId) -> f64 {
        self.contributions
            .iter()
            .filter(|e| &e.project_id == project)
            .map(|e| e.amount)
            .sum()
    }

    /// Largest |FOC residual| over positive, unclamped contributions.
    pub fn max_interior_residual(&self, valuations: &[Valuation]) -> f64 {
        let mut worst: f64 = 0.0;
        for v in valuations {
            let Some(entry) = self
                .contributions
                .iter()
                .find(|e| e.contributor_id == v.contributor_id && e.project_id == v.project_id)
            else {
                continue;
            };
            if entry.amount <= 0.0 || entry.clamped {
                continue;
            }
            let others = others_from_entries(&self.contributions, &v.project_id, &v.contributor_id);
            worst = worst.max(foc_residual(v, entry.amount, others, self.k).abs());
        }
        worst
    }
}

fn others_from_entries(
    entries: &[ContributionEntry],
    project: &ProjectId,
    me: &ContributorId,
) -> OthersOnProject {
    entries
        .iter()
        .filter(|e| &e.project_id == project && &e.contributor_id != me)
        .fold(OthersOnProject::default(), |acc, e| OthersOnProject {
            sqrt_sum: acc.sqrt_sum + e.amount.sqrt(),
            total: acc.total + e.amount,
        })
}

fn check_valuations(valuations: &[Valuation]) -> Result<()> {
    if valuations.is_empty() {
        return Err(Error::domain("at least one valuation is required"));
    }
    let mut seen = BTreeSet::new();
    for v in valuations {
        if !(v.scale > 0.0) || !v.scale.is_finite() {
            return Err(Error::domain(format!(
                "valuation scale must be positive for ({}, {})",
                v.contributor_id, v.project_id
            )));
        }
        if !seen.insert((&v.contributor_id, &v.project_id)) {
            return Err(Error::domain(format!(
                "duplicate valuation for ({}, {})",
                v.contributor_id, v.project_id
            )));
        }
    }
    Ok(())
}

/// Damped best-response iteration to a contribution profile where every backer is
/// best-responding. `k` is held fixed.
pub fn best_response(
    valuations: &[Valuation],
    k: f64,
    budgets: Option<&BTreeMap<ContributorId, f64>>,
    options: &SolverOptions,
) -> Result<EquilibriumResult> {
    check_valuations(valuations)?;
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(format!("k must be positive, got {k}")));
    }

    // Index valuations: contributors in id order, each with its project slots.
    let mut by_contributor: BTreeMap<&ContributorId, Vec<usize>> = BTreeMap::new();
    for (i, v) in valuations.iter().enumerate() {
        by_contributor.entry(&v.contributor_id).or_default().push(i);
    }
    let mut by_project: BTreeMap<&ProjectId, Vec<usize>> = BTreeMap::new();
    for (i, v) in valuations.iter().enumerate() {
        by_project.entry(&v.project_id).or_default().push(i);
    }

    let mut amounts = vec![0.0_f64; valuations.len()];
    let mut clamped = vec![false; valuations.len()];
    let mut converged = false;
    let mut iterations = 0;

    let others_of = |amounts: &[f64], slot: usize| -> OthersOnProject {
        let project = &valuations[slot].project_id;
        by_project[project]
            .iter()
            .filter(|&&j| j != slot)
            .fold(OthersOnProject::default(), |acc, &j| OthersOnProject {
                sqrt_sum: acc.sqrt_sum + amounts[j].sqrt(),
                total: acc.total + amounts[j],
            })
    };

    while iterations < options.max_iter {
        iterations += 1;
        let mut max_move: f64 = 0.0;
        for (contributor, slots) in &by_contributor {
            let context: Vec<(&Valuation, OthersOnProject)> = slots
                .iter()
                .map(|&s| (&valuations[s], others_of(&amounts, s)))
                .collect();
            let budget = budgets.and_then(|b| b.get(*contributor).copied());
            let (targets, bound) = contributor_targets(&context, k, budget);
            for (&slot, target) in slots.iter().zip(targets) {
                let old = amounts[slot];
                let new = (1.0 - options.damping) * old + options.damping * target;
                max_move = max_move.max((new - old).abs() / old.max(1.0));
                amounts[slot] = new;
                clamped[slot] = bound;
            }
        }
        if max_move <= options.tolerance {
            converged = true;
            break;
        }
    }

    let contributions: Vec<ContributionEntry> = valuations
        .iter()
        .enumerate()
        .map(|(i, v)| ContributionEntry {
            contributor_id: v.contributor_id.clone(),
            project_id: v.project_id.clone(),
            amount: amounts[i],
            clamped: clamped[i],
        })
        .collect();

    let mut funds = BTreeMap::new();
    let mut aggregate_marginal = BTreeMap::new();
    for (project, slots) in &by_project {
        let s: f64 = slots.iter().map(|&j| amounts[j].sqrt()).sum();
        let c: f64 = slots.iter().map(|&j| amounts[j]).sum();
        let f = c + (s * s - c).max(0.0) / k;
        funds.insert((*project).clone(), f);
        aggregate_marginal.insert(
            (*project).clone(),
            slots.iter().map(|&j| valuations[j].marginal(f)).sum(),
        );
    }
    let welfare = welfare(valuations, &funds, amounts.iter().copied())?;

    Ok(EquilibriumResult {
        k,
        contributions,
        funds,
        aggregate_marginal,
        welfare,
        iterations,
        converged,
    })
}

/// Experimental: also solves for k, recomputing `k = Σ M_QF / pool` from the induced
/// contributions (damping 0.5) until |Δk| < 1e-6. Returns the last inner result.
pub fn best_response_endogenous_k(
    valuations: &[Valuation],
    pool: f64,
    budgets: Option<&BTreeMap<ContributorId, f64>>,
    options: &SolverOptions,
) -> Result<EquilibriumResult> {
    if !(pool > 0.0) || !pool.is_finite() {
        return Err(Error::domain(format!("pool must be positive, got {pool}")));
    }
    let mut k = 1.0;
    let mut last = None;
    for _ in 0..500 {
        let eq = best_response(valuations, k, budgets, options)?;
        let required: f64 = eq
            .funds
            .keys()
            .map(|p| {
                let s: f64 = eq
                    .contributions
                    .iter()
                    .filter(|e| &e.project_id == p)
                    .map(|e| e.amount.sqrt())
                    .sum();
                (s * s - eq.private_total(p)).max(0.0)
            })
            .sum();
        if required <= 0.0 {
            return Err(Error::NoMatchableProjects("equilibrium".into()));
        }
        let next = 0.5 * k + 0.5 * required / pool;
        let done = (next - k).abs() < 1e-6;
        k = next;
        last = Some(eq);
        if done {
            return best_response(valuations, k, budgets, options);
        }
    }
    let mut eq = last.expect("loop ran");
    eq.converged = false;
    Ok(eq)
}

/// Σ_i Σ_p V_i(F^p) − Σ c.
pub fn welfare(
    valuations: &[Valuation],
    funds: &BTreeMap<ProjectId, f64>,
    contributions: impl IntoIterator<Item = f64>,
) -> Result<f64> {
    let mut gross = 0.0;
    for v in valuations {
        let f = funds.get(&v.project_id).ok_or_else(|| {
            Error::domain(format!("no funding level for project `{}`", v.project_id))
        })?;
        gross += v.value(*f);
    }
    Ok(gross - contributions.into_iter().sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerResult {
    pub funds: BTreeMap<ProjectId, f64>,
    /// The common value of Σ_i V_i'(F^p) on funded projects.
    pub common_marginal: f64,
    /// Σ_i Σ_p V_i(F^p).
    pub welfare: f64,
}

/// Funding level where Σ_i V_i'(F) = λ, floored at zero.
fn invert_aggregate_marginal(vals: &[&Valuation], lambda: f64) -> f64 {
    let sum_v: f64 = vals.iter().map(|v| v.scale).sum();
    if vals.iter().all(|v| v.family == ValuationFamily::Sqrt) {
        let root = sum_v / (2.0 * lambda);
        return root * root;
    }
    if vals.iter().all(|v| v.family == ValuationFamily::Log) {
        return (sum_v / lambda - 1.0).max(0.0);
    }
    let marginal = |f: f64| vals.iter().map(|v| v.marginal(f)).sum::<f64>();
    if marginal(0.0) <= lambda {
        return 0.0;
    }
    let mut hi = 1.0;
    while marginal(hi) > lambda {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if marginal(mid) > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Welfare-maximizing split of `pool` across projects: equalizes Σ_i V_i' on every
/// funded project.
pub fn planner_optimum(valuations: &[Valuation], pool: f64) -> Result<PlannerResult> {
    check_valuations(valuations)?;
    if !(pool > 0.0) || !pool.is_finite() {
        return Err(Error::domain(format!("pool must be positive, got {pool}")));
    }
    let mut by_project: BTreeMap<&ProjectId, Vec<&Valuation>> = BTreeMap::new();
    for v in valuations {
        by_project.entry(&v.project_id).or_default().push(v);
    }
    let total_at = |lambda: f64| -> f64 {
        by_project
            .values()
            .map(|vals| invert_aggregate_marginal(vals, lambda))
            .sum()
    };

    let mut hi = 1.0_f64;
    while total_at(hi) > pool {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::domain("planner: could not bracket the common marginal"));
        }
    }
    let mut lo = hi;
    while total_at(lo) < pool {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::domain("planner: could not bracket the common marginal"));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_at(mid) > pool {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let funds: BTreeMap<ProjectId, f64> = by_project
        .iter()
        .map(|(p, vals)| ((*p).clone(), invert_aggregate_marginal(vals, lambda)))
        .collect();
    let welfare = welfare(valuations, &funds, std::iter::empty())?;
    Ok(PlannerResult {
        funds,
        common_marginal: lambda,
        welfare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_val(c: &str, p: &str, v: f64) -> Valuation {
        Valuation::new(c, p, ValuationFamily::Sqrt, v).unwrap()
    }

    fn log_val(c: &str, p: &str, v: f64) -> Valuation {
        Valuation::new(c, p, ValuationFamily::Log, v).unwrap()
    }

    #[test]
    fn lone_backer_ignores_k() {
        // α = 1 makes the bracket 1, so V'(F) = 1 and F = v²/4 for the sqrt family.
        for k in [1.0, 3.0, 50.0] {
            let eq = best_response(&[sqrt_val("a", "p", 3.0)], k, None, &SolverOptions::default())
                .unwrap();
            assert!(eq.converged);
            let c = eq.amount(&"a".into(), &"p".into());
            assert!((c - 2.25).abs() < 1e-9, "k={k}: {c}");
        }
    }

    #[test]
    fn k_one_sqrt_is_dominant_strategy() {
        // At k=1 the FOC gives √c_i = v_i/2 regardless of others.
        let vals = [sqrt_val("a", "p", 1.0), sqrt_val("b", "p", 3.0), sqrt_val("c", "p", 2.0)];
        let eq = best_response(&vals, 1.0, None, &SolverOptions::default()).unwrap();
        assert!(eq.converged);
        for v in &vals {
            let c = eq.amount(&v.contributor_id, &v.project_id);
            assert!((c - v.scale * v.scale / 4.0).abs() < 1e-9);
        }
        assert!((eq.aggregate_marginal[&ProjectId::from("p")] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interior_residuals_vanish() {
        let vals = [
            sqrt_val("a", "p", 2.0),
            log_val("b", "p", 4.0),
            sqrt_val("a", "q", 1.0),
            log_val("c", "q", 2.5),
        ];
        let eq = best_response(&vals, 4.0, None, &SolverOptions::default()).unwrap();
        assert!(eq.converged);
        assert!(eq.max_interior_residual(&vals) < 1e-6);
    }

    #[test]
    fn log_backer_below_unit_marginal_stays_out() {
        let eq = best_response(&[log_val("a", "p", 0.8)], 2.0, None, &SolverOptions::default())
            .unwrap();
        assert_eq!(eq.amount(&"a".into(), &"p".into()), 0.0);
    }

    #[test]
    fn budgets_clamp_and_are_marked() {
        let vals = [sqrt_val("a", "p", 10.0), sqrt_val("a", "q", 10.0)];
        let budgets: BTreeMap<_, _> = [(ContributorId::from("a"), 5.0)].into_iter().collect();
        let eq = best_response(&vals, 1.0, Some(&budgets), &SolverOptions::default()).unwrap();
        let spent: f64 = eq.contributions.iter().map(|e| e.amount).sum();
        assert!(spent <= 5.0 + 1e-9);
        assert!((spent - 5.0).abs() < 1e-6);
        assert!(eq.contributions.iter().all(|e| e.clamped));
    }

    #[test]
    fn non_convergence_is_reported() {
        let vals = [sqrt_val("a", "p", 2.0), sqrt_val("b", "p", 3.0)];
        let opts = SolverOptions {
            max_iter: 2,
            ..SolverOptions::default()
        };
        let eq = best_response(&vals, 5.0, None, &opts).unwrap();
        assert!(!eq.converged);
        assert_eq!(eq.iterations, 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(best_response(&[], 1.0, None, &SolverOptions::default()).is_err());
        assert!(best_response(&[sqrt_val("a", "p", 1.0)], 0.0, None, &SolverOptions::default())
            .is_err());
        assert!(Valuation::new("a", "p", ValuationFamily::Sqrt, 0.0).is_err());
        assert!("cubic".parse::<ValuationFamily>().is_err());
    }

    #[test]
    fn welfare_examples() {
        let vals = [sqrt_val("a", "p", 2.0)];
        let zero: BTreeMap<_, _> = [(ProjectId::from("p"), 0.0)].into_iter().collect();
        assert_eq!(welfare(&vals, &zero, []).unwrap(), 0.0);
        let four: BTreeMap<_, _> = [(ProjectId::from("p"), 4.0)].into_iter().collect();
        assert_eq!(welfare(&vals, &four, [1.0]).unwrap(), 3.0);
        assert!(welfare(&vals, &BTreeMap::new(), []).is_err());
    }

    #[test]
    fn planner_examples() {
        let vals = [sqrt_val("a", "p", 1.0), sqrt_val("b", "q", 1.0)];
        let plan = planner_optimum(&vals, 10.0).unwrap();
        for f in plan.funds.values() {
            assert!((f - 5.0).abs() < 1e-8);
        }

        let vals = [sqrt_val("a", "p", 1.5), sqrt_val("b", "p", 0.5)];
        let plan = planner_optimum(&vals, 25.0).unwrap();
        assert!((plan.common_marginal - 0.2).abs() < 1e-10);
        assert!((plan.funds[&ProjectId::from("p")] - 25.0).abs() < 1e-8);
    }

    #[test]
    fn planner_log_corner() {
        // q's aggregate marginal at zero is 0.1, below the common λ, so it gets nothing.
        let vals = [log_val("a", "p", 10.0), log_val("b", "q", 0.1)];
        let plan = planner_optimum(&vals, 3.0).unwrap();
        assert_eq!(plan.funds[&ProjectId::from("q")], 0.0);
        assert!((plan.funds[&ProjectId::from("p")] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn planner_mixed_families() {
        let vals = [
            sqrt_val("a", "p", 2.0),
            log_val("b", "p", 3.0),
            sqrt_val("c", "q", 1.0),
        ];
        let plan = planner_optimum(&vals, 12.0).unwrap();
        let total: f64 = plan.funds.values().sum();
        assert!((total - 12.0).abs() < 1e-6 * 12.0);
        for (p, f) in &plan.funds {
            let m: f64 = vals
                .iter()
                .filter(|v| &v.project_id == p)
                .map(|v| v.marginal(*f))
                .sum();
            assert!((m - plan.common_marginal).abs() < 1e-6);
        }
    }

    #[test]
    fn endogenous_k_settles() {
        let vals = [sqrt_val("a", "p", 2.0), sqrt_val("b", "p", 2.0), sqrt_val("c", "q", 1.0),
            sqrt_val("d", "q", 3.0)];
        let eq = best_response_endogenous_k(&vals, 2.0, None, &SolverOptions::default()).unwrap();
        let required: f64 = eq
            .funds
            .iter()
            .map(|(p, f)| (f - eq.private_total(p)) * eq.k)
            .sum();
        assert!((required / 2.0 - eq.k).abs() < 1e-5);
    }
}

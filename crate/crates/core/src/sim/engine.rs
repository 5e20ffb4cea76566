use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{validate_agents, AgentKind, AgentSpec, PoolEvent, RoundConfig};
use crate::efficiency::lambda_p;
use crate::equilibrium::{contributor_targets, OthersOnProject, Valuation};
use crate::error::{Error, Result};
use crate::funding::{compute_k, matching_requirement, Contribution, ProjectLedger};
use crate::ids::{CategoryId, ContributorId, ProjectId};
use crate::ledger::TeamRoster;
use crate::report::{allocation_report, AllocationReport};

/// Emissions below this are dropped rather than recorded.
const MIN_EMISSION: f64 = 1e-9;

/// Trigger memory carried between rounds: `(holder, target)` means `holder`
/// no longer backs `target`'s project.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingMemory {
    pub grudges: BTreeSet<(ContributorId, ContributorId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u32,
    pub pools: BTreeMap<CategoryId, f64>,
    /// k after the day's pool events, before its contributions.
    pub k_open: BTreeMap<CategoryId, Option<f64>>,
    /// k recomputed at night; `None` while nothing in the category is matchable.
    pub k_close: BTreeMap<CategoryId, Option<f64>>,
    /// The k agents acted on: the last announced close, or the configured initial k.
    pub k_observed: BTreeMap<CategoryId, f64>,
    pub m_qf: BTreeMap<ProjectId, f64>,
    pub lambda_p: BTreeMap<ProjectId, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrajectory {
    pub seed: u64,
    pub days: Vec<DayRecord>,
    pub contributions: Vec<Contribution>,
    pub pool_events: Vec<PoolEvent>,
    pub roster: TeamRoster,
    pub spent: BTreeMap<ContributorId, f64>,
    pub honest_agents: Vec<ContributorId>,
    pub ring_memory: RingMemory,
    pub final_report: AllocationReport,
}

impl RoundTrajectory {
    /// Mean total contribution per honest agent (zero when there are none).
    pub fn honest_mean_contribution(&self) -> f64 {
        if self.honest_agents.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .honest_agents
            .iter()
            .map(|id| self.spent.get(id).copied().unwrap_or(0.0))
            .sum();
        total / self.honest_agents.len() as f64
    }

    pub fn k_series(&self, category: &CategoryId) -> Vec<Option<f64>> {
        self.days
            .iter()
            .map(|d| d.k_close.get(category).copied().flatten())
            .collect()
    }
}

struct State<'a> {
    config: &'a RoundConfig,
    category_of: BTreeMap<ProjectId, CategoryId>,
    ledgers: BTreeMap<ProjectId, ProjectLedger>,
    pools: BTreeMap<CategoryId, f64>,
}

impl State<'_> {
    fn category_ledgers(&self, category: &CategoryId) -> Vec<&ProjectLedger> {
        self.ledgers
            .values()
            .filter(|l| l.category() == category)
            .collect()
    }

    fn k(&self, category: &CategoryId) -> Option<f64> {
        let ledgers: Vec<ProjectLedger> = self
            .category_ledgers(category)
            .into_iter()
            .cloned()
            .collect();
        compute_k(&ledgers, self.pools[category]).ok()
    }

    fn ks(&self) -> BTreeMap<CategoryId, Option<f64>> {
        self.config
            .categories
            .iter()
            .map(|c| (c.name.clone(), self.k(&c.name)))
            .collect()
    }
}

fn others_on(ledger: &ProjectLedger, me: &ContributorId) -> (OthersOnProject, f64) {
    let mut others = OthersOnProject::default();
    let mut own = 0.0;
    for (id, amount) in ledger.contributor_amounts() {
        if id == me {
            own = amount;
        } else {
            others.sqrt_sum += amount.sqrt();
            others.total += amount;
        }
    }
    (others, own)
}

/// Top-ups toward the best response against yesterday's state and k, scaled
/// down if they would overrun the remaining budget.
fn honest_emissions(
    agent: &AgentSpec,
    snapshot: &BTreeMap<ProjectId, ProjectLedger>,
    category_of: &BTreeMap<ProjectId, CategoryId>,
    k_observed: &BTreeMap<CategoryId, f64>,
    spent: f64,
) -> Result<Vec<(ProjectId, f64)>> {
    let remaining = agent.budget - spent;
    if remaining <= MIN_EMISSION {
        return Ok(Vec::new());
    }
    // Projects can sit in different categories, so targets are computed per category
    // with the budget shared through a common shadow price only within one k.
    let mut by_category: BTreeMap<&CategoryId, Vec<(Valuation, OthersOnProject, f64)>> = BTreeMap::new();
    for v in &agent.valuations {
        let (others, own) = others_on(&snapshot[&v.project], &agent.id);
        let val = Valuation::new(agent.id.clone(), v.project.clone(), v.family, v.scale)?;
        by_category
            .entry(&category_of[&v.project])
            .or_default()
            .push((val, others, own));
    }
    let mut wanted = Vec::new();
    for (category, items) in &by_category {
        let k = k_observed[*category];
        let refs: Vec<(&Valuation, OthersOnProject)> = items.iter().map(|(v, o, _)| (v, *o)).collect();
        let (targets, _) = contributor_targets(&refs, k, Some(agent.budget));
        for ((v, _, own), target) in items.iter().zip(targets) {
            let top_up = target - own;
            if top_up.is_finite() && top_up > MIN_EMISSION {
                wanted.push((v.project_id.clone(), top_up));
            }
        }
    }
    let sum: f64 = wanted.iter().map(|(_, a)| a).sum();
    if sum > remaining {
        let scale = remaining / sum;
        for (_, a) in &mut wanted {
            *a *= scale;
        }
    }
    Ok(wanted)
}

fn colluder_emissions(
    agent: &AgentSpec,
    ring_projects: &BTreeMap<&ContributorId, &ProjectId>,
    memory: &RingMemory,
    defects: bool,
) -> Vec<(ProjectId, f64)> {
    let own = agent.project.clone().expect("validated colluder project");
    if defects {
        return vec![(own, agent.budget)];
    }
    let share = agent.budget / ring_projects.len() as f64;
    let mut out = Vec::new();
    for (mate, project) in ring_projects {
        if *mate == &agent.id || memory.grudges.contains(&(agent.id.clone(), (*mate).clone())) {
            continue;
        }
        out.push(((*project).clone(), share));
    }
    let given = share * out.len() as f64;
    out.push((own, agent.budget - given));
    out
}

/// Runs one round with empty trigger memory.
pub fn run_round(config: &RoundConfig, agents: &[AgentSpec]) -> Result<RoundTrajectory> {
    run_round_with_memory(config, agents, &RingMemory::default())
}

/// Runs `rounds` consecutive rounds, carrying colluder memory forward. Round `r`
/// uses seed `config.seed + r`.
pub fn run_rounds(config: &RoundConfig, agents: &[AgentSpec], rounds: u32) -> Result<Vec<RoundTrajectory>> {
    let mut memory = RingMemory::default();
    let mut out = Vec::with_capacity(rounds as usize);
    for r in 0..rounds {
        let cfg = RoundConfig {
            seed: config.seed.wrapping_add(u64::from(r)),
            ..config.clone()
        };
        let t = run_round_with_memory(&cfg, agents, &memory)?;
        memory = t.ring_memory.clone();
        out.push(t);
    }
    Ok(out)
}

pub fn run_round_with_memory(
    config: &RoundConfig,
    agents: &[AgentSpec],
    memory: &RingMemory,
) -> Result<RoundTrajectory> {
    config.validate()?;
    validate_agents(config, agents)?;

    let mut category_of = BTreeMap::new();
    let mut ledgers = BTreeMap::new();
    for c in &config.categories {
        for p in &c.projects {
            category_of.insert(p.clone(), c.name.clone());
            ledgers.insert(p.clone(), ProjectLedger::new(p.clone(), c.name.clone()));
        }
    }
    let mut state = State {
        config,
        category_of,
        ledgers,
        pools: config.categories.iter().map(|c| (c.name.clone(), c.pool)).collect(),
    };
    let mut k_observed: BTreeMap<CategoryId, f64> = config
        .categories
        .iter()
        .map(|c| (c.name.clone(), c.initial_k))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut rings: BTreeMap<&str, BTreeMap<&ContributorId, &ProjectId>> = BTreeMap::new();
    let mut roster = TeamRoster::default();
    let mut defects = BTreeMap::new();
    for a in agents.iter().filter(|a| a.kind == AgentKind::ReciprocalColluder) {
        let (ring, project) = (a.ring.as_deref().unwrap(), a.project.as_ref().unwrap());
        rings.entry(ring).or_default().insert(&a.id, project);
        roster.add(project.clone(), a.id.clone());
        defects.insert(&a.id, rng.gen::<f64>() < a.defect_probability);
    }

    let mut spent: BTreeMap<ContributorId, f64> = agents.iter().map(|a| (a.id.clone(), 0.0)).collect();
    let mut done: BTreeSet<&ContributorId> = BTreeSet::new();
    let mut contributions = Vec::new();
    let mut days = Vec::with_capacity(config.duration_days as usize);

    for day in 0..config.duration_days {
        for e in config.pool_events.iter().filter(|e| e.day == day) {
            state.pools.insert(e.category.clone(), e.new_pool);
        }
        let k_open = state.ks();
        let snapshot = state.ledgers.clone();

        let mut emissions: Vec<(&AgentSpec, ProjectId, f64)> = Vec::new();
        for a in agents {
            let active = rng.gen::<f64>() < a.activity;
            let planned = match a.kind {
                AgentKind::Honest if active => {
                    honest_emissions(a, &snapshot, &state.category_of, &k_observed, spent[&a.id])?
                }
                AgentKind::ReciprocalColluder if active && !done.contains(&a.id) => {
                    done.insert(&a.id);
                    let ring = &rings[a.ring.as_deref().unwrap()];
                    colluder_emissions(a, ring, memory, defects[&a.id])
                }
                AgentKind::Scripted if !done.contains(&a.id) && a.day.map_or(active, |d| d == day) => {
                    done.insert(&a.id);
                    vec![(a.project.clone().unwrap(), a.amount.unwrap())]
                }
                _ => Vec::new(),
            };
            emissions.extend(planned.into_iter().map(|(p, amt)| (a, p, amt)));
        }

        for (agent, project, amount) in emissions {
            if amount < MIN_EMISSION {
                continue;
            }
            let total = spent.get_mut(&agent.id).unwrap();
            *total += amount;
            if *total > agent.budget * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::Invariant(format!(
                    "agent `{}` emitted {} against a budget of {}",
                    agent.id, total, agent.budget
                )));
            }
            let c = Contribution {
                day,
                category: state.category_of[&project].clone(),
                project_id: project.clone(),
                contributor_id: agent.id.clone(),
                amount,
            };
            state.ledgers.get_mut(&project).unwrap().push(c.clone())?;
            contributions.push(c);
        }

        let k_close = state.ks();
        let m_qf = state
            .ledgers
            .iter()
            .map(|(p, l)| (p.clone(), matching_requirement(l)))
            .collect();
        let lambda = state
            .ledgers
            .iter()
            .map(|(p, l)| {
                let k = k_close[l.category()];
                let lam = match k {
                    Some(k) if !l.is_empty() => lambda_p(l, k).ok(),
                    _ => None,
                };
                (p.clone(), lam)
            })
            .collect();
        days.push(DayRecord {
            day,
            pools: state.pools.clone(),
            k_open,
            k_close: k_close.clone(),
            k_observed: k_observed.clone(),
            m_qf,
            lambda_p: lambda,
        });
        if (day + 1) % config.k_announce_interval == 0 {
            for (cat, k) in k_close {
                if let Some(k) = k {
                    k_observed.insert(cat, k);
                }
            }
        }
    }

    // A colluder holds a grudge against every ring mate that did not back its project.
    let mut next_memory = memory.clone();
    for members in rings.values() {
        for (holder, project) in members {
            for mate in members.keys() {
                if mate == holder {
                    continue;
                }
                let backed = contributions
                    .iter()
                    .any(|c| &c.contributor_id == *mate && &c.project_id == *project);
                if !backed {
                    next_memory.grudges.insert(((*holder).clone(), (*mate).clone()));
                }
            }
        }
    }

    let ledgers: Vec<ProjectLedger> = state.ledgers.into_values().collect();
    let final_report = allocation_report(&ledgers, &state.pools, config.surplus_policy)?;
    Ok(RoundTrajectory {
        seed: config.seed,
        days,
        contributions,
        pool_events: config.pool_events.clone(),
        roster,
        spent,
        honest_agents: agents
            .iter()
            .filter(|a| a.kind == AgentKind::Honest)
            .map(|a| a.id.clone())
            .collect(),
        ring_memory: next_memory,
        final_report,
    })
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::ValuationFamily;
use crate::error::{Error, Result};
use crate::funding::SurplusPolicy;
use crate::ids::{CategoryId, ContributorId, ProjectId};

fn one() -> f64 {
    1.0
}

fn one_day() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryConfig {
    pub name: CategoryId,
    pub pool: f64,
    pub projects: Vec<ProjectId>,
    /// k announced before the first nightly recomputation.
    #[serde(default = "one")]
    pub initial_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEvent {
    pub day: u32,
    pub category: CategoryId,
    pub new_pool: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Best-responds to the announced k each active day.
    Honest,
    /// Splits its budget across a reciprocal-backing ring once per round.
    ReciprocalColluder,
    /// Gives a fixed amount to one project, once.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectValuation {
    pub project: ProjectId,
    pub family: ValuationFamily,
    pub scale: f64,
}

/// One simulated backer. Which optional fields are required depends on `kind`:
/// honest agents need `valuations`; colluders need `ring` and `project`;
/// scripted agents need `project` and `amount` (and may pin a `day`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: ContributorId,
    pub kind: AgentKind,
    pub budget: f64,
    /// Probability of being active on a given day.
    #[serde(default = "one")]
    pub activity: f64,
    #[serde(default)]
    pub valuations: Vec<ProjectValuation>,
    #[serde(default)]
    pub ring: Option<String>,
    #[serde(default)]
    pub project: Option<ProjectId>,
    #[serde(default)]
    pub defect_probability: f64,
    #[serde(default)]
    pub amount: Option<f64>,
    #[serde(default)]
    pub day: Option<u32>,
}

impl AgentSpec {
    pub fn honest(
        id: impl Into<ContributorId>,
        budget: f64,
        activity: f64,
        valuations: Vec<ProjectValuation>,
    ) -> Self {
        Self {
            id: id.into(),
            kind: AgentKind::Honest,
            budget,
            activity,
            valuations,
            ring: None,
            project: None,
            defect_probability: 0.0,
            amount: None,
            day: None,
        }
    }

    pub fn colluder(
        id: impl Into<ContributorId>,
        budget: f64,
        activity: f64,
        ring: impl Into<String>,
        project: impl Into<ProjectId>,
    ) -> Self {
        Self {
            kind: AgentKind::ReciprocalColluder,
            ring: Some(ring.into()),
            project: Some(project.into()),
            ..Self::honest(id, budget, activity, Vec::new())
        }
    }

    pub fn scripted(
        id: impl Into<ContributorId>,
        project: impl Into<ProjectId>,
        amount: f64,
        day: Option<u32>,
    ) -> Self {
        Self {
            kind: AgentKind::Scripted,
            project: Some(project.into()),
            amount: Some(amount),
            day,
            ..Self::honest(id, amount, 1.0, Vec::new())
        }
    }
}

/// Generates honest agents with random valuations, deterministically from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub honest_agents: usize,
    #[serde(default = "default_projects_per_agent")]
    pub projects_per_agent: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    #[serde(default = "default_family")]
    pub family: ValuationFamily,
    pub budget: f64,
    #[serde(default = "one")]
    pub activity: f64,
}

fn default_projects_per_agent() -> usize {
    1
}

fn default_family() -> ValuationFamily {
    ValuationFamily::Sqrt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub duration_days: u32,
    #[serde(default)]
    pub seed: u64,
    pub categories: Vec<CategoryConfig>,
    #[serde(default)]
    pub pool_events: Vec<PoolEvent>,
    #[serde(default)]
    pub surplus_policy: SurplusPolicy,
    /// Days between k announcements; agents keep acting on the last announced k
    /// (or `initial_k`) in between.
    #[serde(default = "one_day")]
    pub k_announce_interval: u32,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub population: Option<PopulationSpec>,
}

impl RoundConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RoundConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn project_categories(&self) -> BTreeMap<&ProjectId, &CategoryId> {
        self.categories
            .iter()
            .flat_map(|c| c.projects.iter().map(move |p| (p, &c.name)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.duration_days == 0 {
            return bad("duration_days must be positive".into());
        }
        if self.k_announce_interval == 0 {
            return bad("k_announce_interval must be at least one day".into());
        }
        let mut names = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            if !names.insert(&c.name) {
                return bad(format!("duplicate category `{}`", c.name));
            }
            if !(c.pool > 0.0) || !c.pool.is_finite() {
                return bad(format!("pool of `{}` must be positive", c.name));
            }
            if !(c.initial_k > 0.0) {
                return bad(format!("initial_k of `{}` must be positive", c.name));
            }
            for p in &c.projects {
                if !seen.insert(p) {
                    return bad(format!("project `{p}` listed in more than one category"));
                }
            }
        }
        for e in &self.pool_events {
            if e.day >= self.duration_days {
                return bad(format!("pool event on day {} is outside the round", e.day));
            }
            if !(e.new_pool > 0.0) || !e.new_pool.is_finite() {
                return bad("pool events need a positive new_pool".into());
            }
            if !names.contains(&e.category) {
                return bad(format!("pool event for unknown category `{}`", e.category));
            }
        }
        if let Some(pop) = &self.population {
            if pop.projects_per_agent == 0 || pop.projects_per_agent > seen.len() {
                return bad("population.projects_per_agent out of range".into());
            }
            if !(pop.scale_min > 0.0 && pop.scale_max >= pop.scale_min) {
                return bad("population scale range must be positive and ordered".into());
            }
        }
        validate_agents(self, &self.agents)
    }

    /// Listed agents followed by the generated population.
    pub fn all_agents(&self) -> Result<Vec<AgentSpec>> {
        let mut agents = self.agents.clone();
        if let Some(pop) = &self.population {
            agents.extend(generate_population(self, pop));
        }
        validate_agents(self, &agents)?;
        Ok(agents)
    }
}

pub fn generate_population(config: &RoundConfig, pop: &PopulationSpec) -> Vec<AgentSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e_ed0f_a6e4);
    let projects: Vec<&ProjectId> = config.categories.iter().flat_map(|c| &c.projects).collect();
    (0..pop.honest_agents)
        .map(|i| {
            let valuations = projects
                .choose_multiple(&mut rng, pop.projects_per_agent)
                .map(|p| ProjectValuation {
                    project: (*p).clone(),
                    family: pop.family,
                    scale: rng.gen_range(pop.scale_min..=pop.scale_max),
                })
                .collect();
            AgentSpec::honest(format!("h{i:05}"), pop.budget, pop.activity, valuations)
        })
        .collect()
}

pub(crate) fn validate_agents(config: &RoundConfig, agents: &[AgentSpec]) -> Result<()> {
    let bad = |m: String| Err(Error::Config(m));
    let projects = config.project_categories();
    let mut ids = BTreeSet::new();
    let mut rings: BTreeMap<&str, BTreeSet<&ProjectId>> = BTreeMap::new();
    for a in agents {
        if !ids.insert(&a.id) {
            return bad(format!("duplicate agent id `{}`", a.id));
        }
        if !(a.budget > 0.0) || !a.budget.is_finite() {
            return bad(format!("agent `{}` needs a positive budget", a.id));
        }
        if !(0.0..=1.0).contains(&a.activity) || !(0.0..=1.0).contains(&a.defect_probability) {
            return bad(format!("agent `{}` probabilities must lie in [0, 1]", a.id));
        }
        match a.kind {
            AgentKind::Honest => {
                if a.valuations.is_empty() {
                    return bad(format!("honest agent `{}` has no valuations", a.id));
                }
                let mut own = BTreeSet::new();
                for v in &a.valuations {
                    if !projects.contains_key(&v.project) {
                        return bad(format!("agent `{}` values unknown project `{}`", a.id, v.project));
                    }
                    if !own.insert(&v.project) {
                        return bad(format!("agent `{}` values `{}` twice", a.id, v.project));
                    }
                    if !(v.scale > 0.0) {
                        return bad(format!("agent `{}` has a nonpositive valuation scale", a.id));
                    }
                }
            }
            AgentKind::ReciprocalColluder => {
                let (Some(ring), Some(project)) = (&a.ring, &a.project) else {
                    return bad(format!("colluder `{}` needs `ring` and `project`", a.id));
                };
                if !projects.contains_key(project) {
                    return bad(format!("colluder `{}` owns unknown project `{project}`", a.id));
                }
                if !rings.entry(ring).or_default().insert(project) {
                    return bad(format!("two members of ring `{ring}` own `{project}`"));
                }
            }
            AgentKind::Scripted => {
                let (Some(project), Some(amount)) = (&a.project, a.amount) else {
                    return bad(format!("scripted agent `{}` needs `project` and `amount`", a.id));
                };
                if !projects.contains_key(project) {
                    return bad(format!("scripted agent `{}` targets unknown `{project}`", a.id));
                }
                if !(amount > 0.0) || amount > a.budget {
                    return bad(format!("scripted agent `{}` amount must be in (0, budget]", a.id));
                }
            }
        }
    }
    if let Some((ring, _)) = rings.iter().find(|(_, members)| members.len() < 2) {
        return bad(format!("ring `{ring}` needs at least two members"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
duration_days = 30
seed = 7

[[categories]]
name = "infra"
pool = 120000
projects = ["p1", "p2"]

[[categories]]
name = "community"
pool = 120000
projects = ["p3"]
initial_k = 2.5

[[pool_events]]
day = 10
category = "infra"
new_pool = 150000

[[agents]]
id = "alice"
kind = "honest"
budget = 500
activity = 0.4
valuations = [{ project = "p1", family = "sqrt", scale = 20 }]

[[agents]]
id = "r1"
kind = "reciprocal_colluder"
budget = 50
ring = "ring-a"
project = "p2"

[[agents]]
id = "r2"
kind = "reciprocal_colluder"
budget = 50
ring = "ring-a"
project = "p3"

[population]
honest_agents = 5
scale_min = 1
scale_max = 4
budget = 100
"#;

    #[test]
    fn parses_sample() {
        let cfg = RoundConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.categories[1].initial_k, 2.5);
        assert_eq!(cfg.categories[0].initial_k, 1.0);
        assert_eq!(cfg.k_announce_interval, 1);
        assert_eq!(cfg.pool_events[0].new_pool, 150000.0);
        let agents = cfg.all_agents().unwrap();
        assert_eq!(agents.len(), 8);
        assert_eq!(agents, cfg.all_agents().unwrap());
    }

    #[test]
    fn rejects_out_of_round_event() {
        let text = SAMPLE.replace("day = 10", "day = 30");
        assert!(matches!(RoundConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_project_in_two_categories() {
        let text = SAMPLE.replace("projects = [\"p3\"]", "projects = [\"p3\", \"p1\"]");
        assert!(RoundConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn rejects_lonely_ring() {
        let text = SAMPLE.replace("ring = \"ring-a\"\nproject = \"p3\"", "ring = \"ring-b\"\nproject = \"p3\"");
        assert!(RoundConfig::from_toml_str(&text).is_err());
    }
}

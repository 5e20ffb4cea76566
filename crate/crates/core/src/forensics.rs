//! Reciprocal backing between projects.
//!
//! Project A "backs" project B when a registered team member of A contributes to B.
//! A and B are reciprocal when each backs the other. Self-support (a team member
//! funding its own project) is kept out of the graph and reported separately.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funding::Contribution;
use crate::ids::{CategoryId, ContributorId, ProjectId};
use crate::ledger::TeamRoster;
use crate::stats::polyfit;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeight {
    /// Number of contribution records behind the edge.
    pub contributions: u32,
    pub amount: f64,
}

impl EdgeWeight {
    fn add(&mut self, amount: f64) {
        self.contributions += 1;
        self.amount += amount;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContributionGraph {
    /// Every project seen in a roster or as a recipient, with its category if known.
    pub nodes: BTreeMap<ProjectId, Option<CategoryId>>,
    pub edges: BTreeMap<(ProjectId, ProjectId), EdgeWeight>,
    pub self_support: BTreeMap<ProjectId, EdgeWeight>,
}

impl ContributionGraph {
    pub fn has_edge(&self, from: &ProjectId, to: &ProjectId) -> bool {
        self.edges.contains_key(&(from.clone(), to.clone()))
    }

    pub fn out_neighbors<'a>(&'a self, from: &'a ProjectId) -> impl Iterator<Item = &'a ProjectId> + 'a {
        self.edges
            .range((from.clone(), ProjectId::new(""))..)
            .take_while(move |((a, _), _)| a == from)
            .map(|((_, b), _)| b)
    }

    pub fn is_reciprocal(&self, a: &ProjectId, b: &ProjectId) -> bool {
        self.has_edge(a, b) && self.has_edge(b, a)
    }

    fn category(&self, p: &ProjectId) -> Option<&CategoryId> {
        self.nodes.get(p).and_then(Option::as_ref)
    }

    fn crosses(&self, a: &ProjectId, b: &ProjectId) -> bool {
        match (self.category(a), self.category(b)) {
            (Some(x), Some(y)) => x != y,
            _ => false,
        }
    }
}

pub fn build_graph(contributions: &[Contribution], roster: &TeamRoster) -> ContributionGraph {
    let mut graph = ContributionGraph::default();
    for p in roster.members.keys() {
        graph.nodes.entry(p.clone()).or_insert(None);
    }
    for c in contributions {
        let slot = graph.nodes.entry(c.project_id.clone()).or_insert(None);
        if slot.is_none() {
            *slot = Some(c.category.clone());
        }
    }

    let teams = roster.teams_of();
    for c in contributions {
        let Some(home_projects) = teams.get(&c.contributor_id) else {
            continue;
        };
        for &home in home_projects {
            if home == &c.project_id {
                graph.self_support.entry(home.clone()).or_default().add(c.amount);
            } else {
                graph
                    .edges
                    .entry((home.clone(), c.project_id.clone()))
                    .or_default()
                    .add(c.amount);
            }
        }
    }
    graph
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Count backed projects.
    #[default]
    Projects,
    /// Weight each backed project by the amount sent to it.
    Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReciprocityRow {
    pub project_id: ProjectId,
    pub category: Option<CategoryId>,
    pub outdegree: usize,
    pub reciprocal_count: usize,
    pub cross_outdegree: usize,
    pub cross_reciprocal_count: usize,
    pub out_amount: f64,
    pub reciprocal_amount: f64,
    pub self_support_amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    WithIntercept,
    /// Used when every x is identical and positive, leaving the intercept unidentified.
    ThroughOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub method: FitMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReciprocityReport {
    pub weighting: Weighting,
    pub rows: Vec<ReciprocityRow>,
    /// Reciprocal count regressed on outdegree.
    pub slope: Option<SlopeFit>,
    /// Cross-category reciprocal count on cross-category outdegree.
    pub cross_slope_on_cross_outdegree: Option<SlopeFit>,
    /// Cross-category reciprocal count on total outdegree.
    pub cross_slope_on_total_outdegree: Option<SlopeFit>,
}

fn fit_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    if x.len() < 2 || x.iter().all(|v| *v == 0.0) {
        return None;
    }
    if let Some(fit) = polyfit(x, y, 1) {
        return Some(SlopeFit {
            intercept: fit.coeffs[0],
            slope: fit.coeffs[1],
            method: FitMethod::WithIntercept,
        });
    }
    let sx: f64 = x.iter().sum();
    Some(SlopeFit {
        slope: y.iter().sum::<f64>() / sx,
        intercept: 0.0,
        method: FitMethod::ThroughOrigin,
    })
}

pub fn reciprocity_stats(graph: &ContributionGraph, weighting: Weighting) -> Result<ReciprocityReport> {
    if graph.nodes.is_empty() {
        return Err(Error::domain("empty contribution graph"));
    }
    let mut rows = Vec::with_capacity(graph.nodes.len());
    for (p, category) in &graph.nodes {
        let mut row = ReciprocityRow {
            project_id: p.clone(),
            category: category.clone(),
            outdegree: 0,
            reciprocal_count: 0,
            cross_outdegree: 0,
            cross_reciprocal_count: 0,
            out_amount: 0.0,
            reciprocal_amount: 0.0,
            self_support_amount: graph.self_support.get(p).map_or(0.0, |w| w.amount),
        };
        for q in graph.out_neighbors(p) {
            let amount = graph.edges[&(p.clone(), q.clone())].amount;
            let reciprocal = graph.has_edge(q, p);
            let cross = graph.crosses(p, q);
            row.outdegree += 1;
            row.out_amount += amount;
            if reciprocal {
                row.reciprocal_count += 1;
                row.reciprocal_amount += amount;
            }
            if cross {
                row.cross_outdegree += 1;
                if reciprocal {
                    row.cross_reciprocal_count += 1;
                }
            }
        }
        rows.push(row);
    }

    let (x, y): (Vec<f64>, Vec<f64>) = match weighting {
        Weighting::Projects => rows
            .iter()
            .map(|r| (r.outdegree as f64, r.reciprocal_count as f64))
            .unzip(),
        Weighting::Amount => rows.iter().map(|r| (r.out_amount, r.reciprocal_amount)).unzip(),
    };
    let cross_y: Vec<f64> = rows.iter().map(|r| r.cross_reciprocal_count as f64).collect();
    let cross_x: Vec<f64> = rows.iter().map(|r| r.cross_outdegree as f64).collect();
    let total_x: Vec<f64> = rows.iter().map(|r| r.outdegree as f64).collect();

    Ok(ReciprocityReport {
        weighting,
        slope: fit_slope(&x, &y),
        cross_slope_on_cross_outdegree: fit_slope(&cross_x, &cross_y),
        cross_slope_on_total_outdegree: fit_slope(&total_x, &cross_y),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCategoryRow {
    pub category: CategoryId,
    pub projects: usize,
    /// Share of the other labelled projects that sit outside this category.
    pub share_projects_outside: f64,
    pub share_projects_inside: f64,
    /// Reciprocal partners summed over this category's projects.
    pub reciprocal_relations: usize,
    pub cross_reciprocal_relations: usize,
    /// `None` when the category's projects have no reciprocal partners.
    pub share_reciprocal_outside: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCategoryReport {
    pub rows: Vec<CrossCategoryRow>,
    /// Set when all labelled projects share one category.
    pub single_category: bool,
}

pub fn cross_category_stats(graph: &ContributionGraph) -> Result<CrossCategoryReport> {
    let mut counts: BTreeMap<&CategoryId, usize> = BTreeMap::new();
    for c in graph.nodes.values().flatten() {
        *counts.entry(c).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::domain("no category labels on the graph"));
    }
    let labelled: usize = counts.values().sum();
    let single_category = counts.len() == 1;

    let mut relations: BTreeMap<&CategoryId, (usize, usize)> = BTreeMap::new();
    for (a, b) in graph.edges.keys() {
        let Some(cat) = graph.category(a) else { continue };
        if graph.category(b).is_none() || !graph.has_edge(b, a) {
            continue;
        }
        let entry = relations.entry(cat).or_default();
        entry.0 += 1;
        if graph.crosses(a, b) {
            entry.1 += 1;
        }
    }

    let rows = counts
        .iter()
        .map(|(cat, &n)| {
            let (all, cross) = relations.get(cat).copied().unwrap_or_default();
            let outside = if single_category || labelled < 2 {
                0.0
            } else {
                (labelled - n) as f64 / (labelled - 1) as f64
            };
            let share_reciprocal_outside = if single_category {
                Some(0.0)
            } else if all > 0 {
                Some(cross as f64 / all as f64)
            } else {
                None
            };
            CrossCategoryRow {
                category: (*cat).clone(),
                projects: n,
                share_projects_outside: outside,
                share_projects_inside: 1.0 - outside,
                reciprocal_relations: all,
                cross_reciprocal_relations: cross,
                share_reciprocal_outside,
            }
        })
        .collect();
    Ok(CrossCategoryReport {
        rows,
        single_category,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: `project_id,category,outdegree,reciprocal_count,cross_outdegree,
/// cross_reciprocal_count,out_amount,reciprocal_amount,self_support_amount`.
pub fn write_reciprocal_report<W: Write>(writer: W, report: &ReciprocityReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "project_id",
        "category",
        "outdegree",
        "reciprocal_count",
        "cross_outdegree",
        "cross_reciprocal_count",
        "out_amount",
        "reciprocal_amount",
        "self_support_amount",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.project_id.to_string(),
            r.category.as_ref().map(|c| c.to_string()).unwrap_or_default(),
            r.outdegree.to_string(),
            r.reciprocal_count.to_string(),
            r.cross_outdegree.to_string(),
            r.cross_reciprocal_count.to_string(),
            r.out_amount.to_string(),
            r.reciprocal_amount.to_string(),
            r.self_support_amount.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<reciprocal_report>", e))?;
    Ok(())
}

/// Columns: `category,projects,share_projects_outside,share_projects_inside,
/// reciprocal_relations,cross_reciprocal_relations,share_reciprocal_outside,single_category`.
pub fn write_cross_category<W: Write>(writer: W, report: &CrossCategoryReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "category",
        "projects",
        "share_projects_outside",
        "share_projects_inside",
        "reciprocal_relations",
        "cross_reciprocal_relations",
        "share_reciprocal_outside",
        "single_category",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.category.to_string(),
            r.projects.to_string(),
            r.share_projects_outside.to_string(),
            r.share_projects_inside.to_string(),
            r.reciprocal_relations.to_string(),
            r.cross_reciprocal_relations.to_string(),
            opt(r.share_reciprocal_outside),
            report.single_category.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cross_category>", e))?;
    Ok(())
}

/// Synthetic contribution ledgers with known reciprocity structure.
pub mod synthetic {
    use super::*;

    fn project(i: usize) -> ProjectId {
        ProjectId(format!("p{i:04}"))
    }

    fn member(i: usize) -> ContributorId {
        ContributorId(format!("team-p{i:04}"))
    }

    fn emit(
        edges: &BTreeSet<(usize, usize)>,
        categories: &[CategoryId],
        rng: &mut ChaCha8Rng,
    ) -> (Vec<Contribution>, TeamRoster) {
        let mut roster = TeamRoster::default();
        for i in 0..categories.len() {
            roster.add(project(i), member(i));
        }
        let contributions = edges
            .iter()
            .map(|&(a, b)| Contribution {
                day: 0,
                category: categories[b].clone(),
                project_id: project(b),
                contributor_id: member(a),
                amount: 1.0 + rng.gen::<f64>() * 9.0,
            })
            .collect();
        (contributions, roster)
    }

    /// Assigns `projects` nodes to categories in proportion to `weights`.
    pub fn assign_categories(projects: usize, weights: &[(CategoryId, usize)]) -> Vec<CategoryId> {
        weights
            .iter()
            .flat_map(|(c, w)| std::iter::repeat_n(c.clone(), *w))
            .cycle()
            .take(projects)
            .collect()
    }

    /// Every project backs `1..=max_outdegree` others; each of those backings is
    /// returned with probability `return_probability`. Reciprocal pairs are formed by
    /// pairing "return" slots across projects, and the remaining backings point at
    /// projects with no link either way, so a project's reciprocal count is
    /// Binomial(outdegree, p) given its outdegree.
    pub fn reciprocal_mixture(
        categories: &[CategoryId],
        max_outdegree: usize,
        return_probability: f64,
        seed: u64,
    ) -> (Vec<Contribution>, TeamRoster) {
        let n = categories.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let degrees: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=max_outdegree)).collect();
        let mut mutual_slots: Vec<usize> = Vec::new();
        let mut one_way = vec![0usize; n];
        for (i, &d) in degrees.iter().enumerate() {
            let m = (0..d).filter(|_| rng.gen_bool(return_probability)).count();
            mutual_slots.extend(std::iter::repeat_n(i, m));
            one_way[i] = d - m;
        }
        mutual_slots.shuffle(&mut rng);

        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        let linked = |edges: &BTreeSet<(usize, usize)>, a: usize, b: usize| {
            edges.contains(&(a, b)) || edges.contains(&(b, a))
        };
        for pair in mutual_slots.chunks(2) {
            match *pair {
                [a, b] if a != b && !linked(&edges, a, b) => {
                    edges.insert((a, b));
                    edges.insert((b, a));
                }
                [a, b] => {
                    one_way[a] += 1;
                    one_way[b] += 1;
                }
                [a] => one_way[a] += 1,
                _ => unreachable!(),
            }
        }
        for (a, &slots) in one_way.iter().enumerate() {
            for _ in 0..slots {
                for _attempt in 0..100 {
                    let b = rng.gen_range(0..n);
                    if b != a && !linked(&edges, a, b) {
                        edges.insert((a, b));
                        break;
                    }
                }
            }
        }
        emit(&edges, categories, &mut rng)
    }

    /// Null model: each project backs `outdegree` distinct others chosen uniformly,
    /// independent of category.
    pub fn uniform_backing(
        categories: &[CategoryId],
        outdegree: usize,
        seed: u64,
    ) -> (Vec<Contribution>, TeamRoster) {
        let n = categories.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = BTreeSet::new();
        for a in 0..n {
            let others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
            for &b in others.choose_multiple(&mut rng, outdegree.min(n - 1)) {
                edges.insert((a, b));
            }
        }
        emit(&edges, categories, &mut rng)
    }
}

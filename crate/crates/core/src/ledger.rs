//! CSV ingestion and export.
//!
//! `contributions.csv` is parsed leniently: bad rows are skipped and reported with
//! their line numbers. The smaller side files (teams, pools, valuations, budgets)
//! are parsed strictly and fail on the first bad row.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{Valuation, ValuationFamily};
use crate::error::{Error, Result};
use crate::funding::Contribution;
use crate::ids::{CategoryId, ContributorId, ProjectId};

pub const CONTRIBUTION_COLUMNS: [&str; 5] = ["day", "category", "project_id", "contributor_id", "amount"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedContributions {
    pub records: Vec<Contribution>,
    pub rejected: Vec<RowError>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn load_contributions(path: impl AsRef<Path>) -> Result<LoadedContributions> {
    let path = path.as_ref();
    read_contributions(open(path)?, path)
}

/// Like [`load_contributions`], from any reader; `origin` is only used in messages.
pub fn read_contributions<R: Read>(reader: R, origin: &Path) -> Result<LoadedContributions> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| format_error(origin, e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(format_error(origin, "missing header"));
    }
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(CONTRIBUTION_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| format_error(origin, format!("missing column `{name}` in header")))?;
    }

    let mut out = LoadedContributions::default();
    for result in rdr.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.rejected.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(index[i]).map(str::trim);
        let parsed = (|| -> std::result::Result<Contribution, String> {
            let get = |i: usize| field(i).ok_or_else(|| format!("missing `{}`", CONTRIBUTION_COLUMNS[i]));
            let day: u32 = get(0)?
                .parse()
                .map_err(|_| format!("bad day `{}`", get(0).unwrap_or("")))?;
            let category = get(1)?;
            let project = get(2)?;
            let contributor = get(3)?;
            if category.is_empty() || project.is_empty() || contributor.is_empty() {
                return Err("empty identifier".into());
            }
            let raw_amount = get(4)?;
            let amount: f64 = raw_amount
                .parse()
                .map_err(|_| format!("bad amount `{raw_amount}`"))?;
            if !amount.is_finite() || amount <= 0.0 {
                return Err(format!("amount must be positive, got `{raw_amount}`"));
            }
            Ok(Contribution::new(day, category, project, contributor, amount))
        })();
        match parsed {
            Ok(c) => out.records.push(c),
            Err(message) => out.rejected.push(RowError { line, message }),
        }
    }
    Ok(out)
}

pub fn write_contributions_to<W: Write>(writer: W, records: &[Contribution]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CONTRIBUTION_COLUMNS)?;
    for c in records {
        w.write_record([
            c.day.to_string(),
            c.category.to_string(),
            c.project_id.to_string(),
            c.contributor_id.to_string(),
            c.amount.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<contributions>", e))?;
    Ok(())
}

pub fn write_contributions(path: impl AsRef<Path>, records: &[Contribution]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_contributions_to(file, records)
}

fn load_strict<T: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr
        .headers()
        .map_err(|e| format_error(path, e.to_string()))?
        .clone();
    for col in columns {
        if !headers.iter().any(|h| h == *col) {
            return Err(format_error(path, format!("missing column `{col}` in header")));
        }
    }
    rdr.deserialize()
        .map(|row| row.map_err(|e| format_error(path, e.to_string())))
        .collect()
}

/// Team members registered for each project.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamRoster {
    pub members: BTreeMap<ProjectId, BTreeSet<ContributorId>>,
}

impl TeamRoster {
    pub fn add(&mut self, project: impl Into<ProjectId>, member: impl Into<ContributorId>) {
        self.members
            .entry(project.into())
            .or_default()
            .insert(member.into());
    }

    /// Projects on whose team `member` sits.
    pub fn teams_of(&self) -> BTreeMap<&ContributorId, Vec<&ProjectId>> {
        let mut out: BTreeMap<&ContributorId, Vec<&ProjectId>> = BTreeMap::new();
        for (p, members) in &self.members {
            for m in members {
                out.entry(m).or_default().push(p);
            }
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TeamRow {
    project_id: String,
    member_id: String,
}

/// `teams.csv` with header `project_id,member_id`.
pub fn load_teams(path: impl AsRef<Path>) -> Result<TeamRoster> {
    let path = path.as_ref();
    let rows: Vec<TeamRow> = load_strict(path, &["project_id", "member_id"])?;
    let mut roster = TeamRoster::default();
    for row in rows {
        if row.project_id.is_empty() || row.member_id.is_empty() {
            return Err(format_error(path, "empty identifier in teams file"));
        }
        roster.add(row.project_id, row.member_id);
    }
    Ok(roster)
}

pub fn write_teams(path: impl AsRef<Path>, roster: &TeamRoster) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for (p, members) in &roster.members {
        for m in members {
            w.serialize(TeamRow {
                project_id: p.to_string(),
                member_id: m.to_string(),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolRow {
    category: String,
    pool: f64,
}

/// `pools.csv` with header `category,pool`.
pub fn load_pools(path: impl AsRef<Path>) -> Result<BTreeMap<CategoryId, f64>> {
    let path = path.as_ref();
    let rows: Vec<PoolRow> = load_strict(path, &["category", "pool"])?;
    let mut out = BTreeMap::new();
    for row in rows {
        if !(row.pool > 0.0) || !row.pool.is_finite() {
            return Err(format_error(
                path,
                format!("pool for `{}` must be positive", row.category),
            ));
        }
        if out.insert(CategoryId::new(row.category.clone()), row.pool).is_some() {
            return Err(format_error(path, format!("duplicate category `{}`", row.category)));
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ValuationRow {
    contributor_id: String,
    project_id: String,
    family: String,
    scale: f64,
}

/// `valuations.csv` with header `contributor_id,project_id,family,scale`.
pub fn load_valuations(path: impl AsRef<Path>) -> Result<Vec<Valuation>> {
    let path = path.as_ref();
    let rows: Vec<ValuationRow> =
        load_strict(path, &["contributor_id", "project_id", "family", "scale"])?;
    rows.into_iter()
        .map(|r| {
            let family: ValuationFamily = r.family.parse()?;
            Valuation::new(r.contributor_id, r.project_id, family, r.scale)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct BudgetRow {
    contributor_id: String,
    budget: f64,
}

/// `budgets.csv` with header `contributor_id,budget`.
pub fn load_budgets(path: impl AsRef<Path>) -> Result<BTreeMap<ContributorId, f64>> {
    let path = path.as_ref();
    let rows: Vec<BudgetRow> = load_strict(path, &["contributor_id", "budget"])?;
    rows.into_iter()
        .map(|r| {
            if r.budget >= 0.0 && r.budget.is_finite() {
                Ok((ContributorId::new(r.contributor_id), r.budget))
            } else {
                Err(format_error(path, format!("bad budget for `{}`", r.contributor_id)))
            }
        })
        .collect()
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::RoundTrajectory;
use crate::error::{Error, Result};
use crate::ids::{CategoryId, ProjectId};
use crate::ledger::{write_contributions, write_teams};
use crate::stats::{polyfit, PolyFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitRow {
    pub project_id: ProjectId,
    pub category: CategoryId,
    pub contributors: usize,
    pub m_qf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitCurve {
    pub rows: Vec<DeficitRow>,
    /// Quadratic least-squares fit of M_QF on contributor count; `None` with fewer
    /// than three distinct counts.
    pub fit: Option<PolyFit>,
}

pub fn deficit_curve(trajectory: &RoundTrajectory) -> DeficitCurve {
    let rows: Vec<DeficitRow> = trajectory
        .final_report
        .categories
        .iter()
        .flat_map(|c| &c.projects)
        .map(|p| DeficitRow {
            project_id: p.project_id.clone(),
            category: p.category.clone(),
            contributors: p.contributors,
            m_qf: p.m_qf,
        })
        .collect();
    let x: Vec<f64> = rows.iter().map(|r| r.contributors as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.m_qf).collect();
    DeficitCurve {
        fit: polyfit(&x, &y, 2),
        rows,
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flush<W: Write>(w: &mut csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub const PANEL_COLUMNS: [&str; 9] = [
    "day",
    "category",
    "project_id",
    "contributor_id",
    "amount",
    "sqrt_amount",
    "k_at_day",
    "post_event_flag",
    "increase_category_flag",
];

/// One row per contribution. `k_at_day` is the category's k at the close of that
/// day; `post_event_flag` is 1 from the first pool event onward; categories whose
/// pool changes during the round get `increase_category_flag = 1`.
pub fn write_panel<W: Write>(writer: W, trajectory: &RoundTrajectory) -> Result<()> {
    let first_event = trajectory.pool_events.iter().map(|e| e.day).min();
    let changed: Vec<&CategoryId> = trajectory.pool_events.iter().map(|e| &e.category).collect();
    let k_close: BTreeMap<u32, &BTreeMap<CategoryId, Option<f64>>> =
        trajectory.days.iter().map(|d| (d.day, &d.k_close)).collect();

    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PANEL_COLUMNS)?;
    for c in &trajectory.contributions {
        let k = k_close
            .get(&c.day)
            .and_then(|m| m.get(&c.category).copied().flatten());
        let post = first_event.is_some_and(|d| c.day >= d);
        w.write_record([
            c.day.to_string(),
            c.category.to_string(),
            c.project_id.to_string(),
            c.contributor_id.to_string(),
            c.amount.to_string(),
            c.amount.sqrt().to_string(),
            opt(k),
            u8::from(post).to_string(),
            u8::from(changed.contains(&&c.category)).to_string(),
        ])?;
    }
    flush(&mut w, Path::new("<panel>"))
}

pub fn emit_panel(trajectory: &RoundTrajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_panel(create(path)?, trajectory)
}

/// Columns: `day,category,pool,k_open,k_close,k_observed`.
pub fn write_k_series<W: Write>(writer: W, trajectory: &RoundTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "category", "pool", "k_open", "k_close", "k_observed"])?;
    for d in &trajectory.days {
        for (cat, pool) in &d.pools {
            w.write_record([
                d.day.to_string(),
                cat.to_string(),
                pool.to_string(),
                opt(d.k_open.get(cat).copied().flatten()),
                opt(d.k_close.get(cat).copied().flatten()),
                d.k_observed.get(cat).map(f64::to_string).unwrap_or_default(),
            ])?;
        }
    }
    flush(&mut w, Path::new("<k series>"))
}

/// Columns: `project_id,category,contributors,m_qf`.
pub fn write_deficit_curve<W: Write>(writer: W, curve: &DeficitCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["project_id", "category", "contributors", "m_qf"])?;
    for r in &curve.rows {
        w.write_record([
            r.project_id.to_string(),
            r.category.to_string(),
            r.contributors.to_string(),
            r.m_qf.to_string(),
        ])?;
    }
    flush(&mut w, Path::new("<deficits>"))
}

/// Everything a round produces, written into `dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutputs {
    pub panel: std::path::PathBuf,
    pub k_series: std::path::PathBuf,
    pub deficits: std::path::PathBuf,
    pub deficit_fit: std::path::PathBuf,
    pub contributions: std::path::PathBuf,
    pub teams: std::path::PathBuf,
    pub report: std::path::PathBuf,
}

pub fn write_round_outputs(trajectory: &RoundTrajectory, dir: impl AsRef<Path>) -> Result<RoundOutputs> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = RoundOutputs {
        panel: dir.join("panel.csv"),
        k_series: dir.join("k_by_day.csv"),
        deficits: dir.join("deficits.csv"),
        deficit_fit: dir.join("deficit_fit.json"),
        contributions: dir.join("contributions.csv"),
        teams: dir.join("teams.csv"),
        report: dir.join("report.json"),
    };
    emit_panel(trajectory, &out.panel)?;
    write_k_series(create(&out.k_series)?, trajectory)?;
    let curve = deficit_curve(trajectory);
    write_deficit_curve(create(&out.deficits)?, &curve)?;
    serde_json::to_writer_pretty(create(&out.deficit_fit)?, &curve.fit)?;
    write_contributions(&out.contributions, &trajectory.contributions)?;
    write_teams(&out.teams, &trajectory.roster)?;
    serde_json::to_writer_pretty(create(&out.report)?, &trajectory.final_report)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funding::{compute_k, ProjectLedger};
    use crate::sim::config::{AgentSpec, CategoryConfig, PoolEvent, RoundConfig};
    use crate::sim::engine::run_round;

    fn config(events: Vec<PoolEvent>) -> RoundConfig {
        RoundConfig {
            duration_days: 6,
            seed: 3,
            categories: vec![
                CategoryConfig {
                    name: "a".into(),
                    pool: 50.0,
                    projects: vec!["p1".into(), "p2".into(), "p3".into()],
                    initial_k: 1.0,
                },
                CategoryConfig {
                    name: "b".into(),
                    pool: 50.0,
                    projects: vec!["q1".into()],
                    initial_k: 1.0,
                },
            ],
            pool_events: events,
            surplus_policy: Default::default(),
            k_announce_interval: 1,
            agents: Vec::new(),
            population: None,
        }
    }

    fn panel_text(t: &RoundTrajectory) -> String {
        let mut buf = Vec::new();
        write_panel(&mut buf, t).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_trajectory_header_only() {
        let t = run_round(&config(Vec::new()), &[]).unwrap();
        assert_eq!(panel_text(&t), format!("{}\n", PANEL_COLUMNS.join(",")));
    }

    #[test]
    fn single_contributor_projects_have_no_deficit() {
        let agents = vec![
            AgentSpec::scripted("x", "p1", 3.0, None),
            AgentSpec::scripted("y", "p2", 5.0, None),
        ];
        let t = run_round(&config(Vec::new()), &agents).unwrap();
        let curve = deficit_curve(&t);
        assert!(curve.rows.iter().all(|r| r.m_qf == 0.0));
    }

    #[test]
    fn panel_k_replays_and_event_flag_flips() {
        let mut agents = Vec::new();
        for day in 0..6u32 {
            for (j, project) in ["p1", "p2", "q1"].iter().enumerate() {
                agents.push(AgentSpec::scripted(
                    format!("s{day}-{j}"),
                    *project,
                    1.0 + f64::from(day) * 0.5 + j as f64,
                    Some(day),
                ));
            }
        }
        let events = vec![PoolEvent {
            day: 3,
            category: "a".into(),
            new_pool: 62.5,
        }];
        let t = run_round(&config(events), &agents).unwrap();
        let text = panel_text(&t);
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut seen = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let day: u32 = rec[0].parse().unwrap();
            let category = &rec[1];
            // Replay: every contribution up to and including this day, current pool.
            let upto: Vec<_> = t
                .contributions
                .iter()
                .filter(|c| c.day <= day && c.category.as_str() == category)
                .cloned()
                .collect();
            let pool = t.days[day as usize].pools[&CategoryId::from(category)];
            match compute_k(&ProjectLedger::group(&upto).unwrap(), pool) {
                Ok(k) => {
                    let logged: f64 = rec[6].parse().unwrap();
                    assert!((logged - k).abs() < 1e-9, "day {day}: {logged} vs {k}");
                }
                Err(_) => assert_eq!(&rec[6], ""),
            }
            assert_eq!(&rec[7], if day >= 3 { "1" } else { "0" });
            assert_eq!(&rec[8], if category == "a" { "1" } else { "0" });
            seen += 1;
        }
        assert_eq!(seen, t.contributions.len());
    }

    #[test]
    fn writes_all_outputs() {
        let agents = vec![
            AgentSpec::scripted("x", "p1", 3.0, None),
            AgentSpec::scripted("y", "p1", 5.0, None),
            AgentSpec::colluder("r1", 2.0, 1.0, "ring", "p2"),
            AgentSpec::colluder("r2", 2.0, 1.0, "ring", "q1"),
        ];
        let t = run_round(&config(Vec::new()), &agents).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = write_round_outputs(&t, dir.path()).unwrap();
        let teams = std::fs::read_to_string(&out.teams).unwrap();
        assert!(teams.starts_with("project_id,member_id\n"));
        let report: crate::report::AllocationReport =
            serde_json::from_str(&std::fs::read_to_string(&out.report).unwrap()).unwrap();
        assert_eq!(report, t.final_report);
        let loaded = crate::ledger::load_contributions(&out.contributions).unwrap();
        assert_eq!(loaded.records, t.contributions);
    }
}

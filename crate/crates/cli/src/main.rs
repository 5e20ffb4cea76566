use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qf_core::concentration::{decomposed_match, share_profile};
use qf_core::efficiency::{
    dispersion, k_sweep, lambda_lower_bound, lambda_p, linear_k_grid, write_sweep_csv, RatioProfile,
};
use qf_core::equilibrium::{best_response, best_response_endogenous_k, planner_optimum, SolverOptions};
use qf_core::forensics::{
    build_graph, cross_category_stats, reciprocity_stats, write_cross_category, write_reciprocal_report, Weighting,
};
use qf_core::ledger::{load_budgets, load_contributions, load_pools, load_teams, load_valuations, LoadedContributions};
use qf_core::report::{allocation_report, write_allocation_csv};
use qf_core::sim::{run_rounds, write_round_outputs, RoundConfig};
use qf_core::strategy::{threshold_sweep, thresholds, trigger_threshold, write_thresholds_csv};
use qf_core::{matching_requirement, Error, ProjectLedger, SurplusPolicy};

#[derive(Parser)]
#[command(name = "qfund", version, about = "Quadratic funding with a capped matching pool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scale QF matches to each category's pool; JSON report on stdout.
    Allocate(AllocateArgs),
    /// Per-project concentration and λ_p diagnostics as CSV.
    Diagnose(DiagnoseArgs),
    /// λ_p against k for ratio profiles such as 1:15.
    SweepK(SweepArgs),
    /// Collusion thresholds for a ring of n projects.
    Collusion(CollusionArgs),
    /// Contributor best-response equilibrium for given valuations.
    Equilibrium(EquilibriumArgs),
    /// Run a simulated round from a TOML config.
    Simulate(SimulateArgs),
    /// Reciprocal-backing statistics from contributions and team rosters.
    Reciprocal(ReciprocalArgs),
}

#[derive(Args)]
struct LedgerArgs {
    #[arg(long)]
    contributions: PathBuf,
    /// CSV with header `category,pool`.
    #[arg(long)]
    pools: PathBuf,
    /// Never pay more than the QF requirement when the pool is larger than needed.
    #[arg(long)]
    cap_at_target: bool,
}

#[derive(Args)]
struct AllocateArgs {
    #[command(flatten)]
    ledger: LedgerArgs,
    /// Also write the per-project table here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    ledger: LedgerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-category λ_p dispersion as JSON here.
    #[arg(long)]
    dispersion: Option<PathBuf>,
}

fn parse_profiles(s: &str) -> Result<Vec<RatioProfile>, String> {
    RatioProfile::parse_list(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_profiles, default_value = "1:1,1:2,1:15")]
    profiles: std::vec::Vec<RatioProfile>,
    #[arg(long, default_value_t = 1.0)]
    k_min: f64,
    #[arg(long, default_value_t = 20.0)]
    k_max: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CollusionArgs {
    #[arg(long, default_value_t = 25)]
    n: u32,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Emit the threshold curves for several ring sizes instead of one row.
    #[arg(long)]
    sweep: bool,
    #[arg(long, value_delimiter = ',', default_value = "10,25")]
    sweep_n: Vec<u32>,
    #[arg(long, default_value_t = 50.0)]
    sweep_k_max: f64,
    #[arg(long, default_value_t = 99)]
    sweep_steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EquilibriumArgs {
    /// CSV with header `contributor_id,project_id,family,scale`.
    #[arg(long)]
    valuations: PathBuf,
    /// CSV with header `contributor_id,budget`.
    #[arg(long)]
    budgets: Option<PathBuf>,
    /// Fixed k announced to contributors.
    #[arg(long, conflicts_with = "pool", required_unless_present = "pool")]
    k: Option<f64>,
    /// Solve for k jointly with contributions against this pool.
    #[arg(long)]
    pool: Option<f64>,
    /// Also report the planner's split of this pool.
    #[arg(long)]
    planner_pool: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Consecutive rounds; colluders remember defections between them.
    #[arg(long, default_value_t = 1)]
    rounds: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Projects,
    Amount,
}

#[derive(Args)]
struct ReciprocalArgs {
    #[arg(long)]
    contributions: PathBuf,
    /// CSV with header `project_id,member_id`.
    #[arg(long)]
    teams: PathBuf,
    #[arg(long, value_enum, default_value = "projects")]
    weighting: WeightingArg,
    /// Directory for reciprocal_report.csv and cross_category.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    match path {
        Some(p) => Ok(Box::new(File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?)),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::Io {
        path: path.unwrap_or(Path::new("<stdout>")).to_path_buf(),
        source: e,
    })
}

fn load_reporting(path: &Path) -> Result<LoadedContributions, Error> {
    let loaded = load_contributions(path)?;
    for r in &loaded.rejected {
        eprintln!("warning: {}:{}: skipped row: {}", path.display(), r.line, r.message);
    }
    Ok(loaded)
}

fn policy(cap: bool) -> SurplusPolicy {
    if cap {
        SurplusPolicy::CapAtTarget
    } else {
        SurplusPolicy::Literal
    }
}

fn allocate(args: &AllocateArgs) -> Result<(), Error> {
    let loaded = load_reporting(&args.ledger.contributions)?;
    let pools = load_pools(&args.ledger.pools)?;
    let ledgers = ProjectLedger::group(&loaded.records)?;
    let report = allocation_report(&ledgers, &pools, policy(args.ledger.cap_at_target))?;
    let unmatchable = report.unmatchable_categories();
    if unmatchable.len() == report.categories.len() {
        let names: Vec<String> = unmatchable.iter().map(ToString::to_string).collect();
        return Err(Error::NoMatchableProjects(names.join(", ")));
    }
    for c in unmatchable {
        eprintln!("warning: category `{c}` has no matchable projects; k is undefined");
    }
    if let Some(path) = &args.csv {
        write_allocation_csv(output(Some(path))?, &report)?;
    }
    write_json(args.out.as_deref(), &report)
}

fn diagnose(args: &DiagnoseArgs) -> Result<(), Error> {
    let loaded = load_reporting(&args.ledger.contributions)?;
    let pools = load_pools(&args.ledger.pools)?;
    let ledgers = ProjectLedger::group(&loaded.records)?;
    let report = allocation_report(&ledgers, &pools, policy(args.ledger.cap_at_target))?;
    let ks: BTreeMap<_, _> = report
        .categories
        .iter()
        .map(|c| (c.category.clone(), c.effective_k))
        .collect();

    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record([
        "category",
        "project_id",
        "n",
        "hhi",
        "share_variance",
        "mean_share",
        "m_qf",
        "decomposed_match",
        "k",
        "lambda_p",
        "lambda_lower_bound",
    ])?;
    let mut lambda_reports = Vec::new();
    for l in ledgers.iter().filter(|l| !l.is_empty()) {
        let profile = share_profile(l)?;
        let k = ks[l.category()];
        let (lam, bound) = match k {
            Some(k) => (Some(lambda_p(l, k)?), Some(lambda_lower_bound(l, k)?)),
            None => (None, None),
        };
        if let Some(k) = k {
            lambda_reports.push(qf_core::efficiency::lambda_report(l, k)?);
        }
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            l.category().to_string(),
            l.project_id().to_string(),
            profile.n.to_string(),
            profile.hhi.to_string(),
            profile.variance.to_string(),
            profile.mean.to_string(),
            matching_requirement(l).to_string(),
            decomposed_match(l)?.to_string(),
            opt(k),
            opt(lam),
            opt(bound),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: PathBuf::from("<diagnose>"),
        source: e,
    })?;
    if let Some(path) = &args.dispersion {
        let stats = ks
            .iter()
            .filter(|(_, k)| k.is_some())
            .map(|(c, _)| dispersion(&lambda_reports, c))
            .collect::<Result<Vec<_>, _>>()?;
        write_json(Some(path), &stats)?;
    }
    Ok(())
}

fn sweep_k(args: &SweepArgs) -> Result<(), Error> {
    let grid = linear_k_grid(args.k_min, args.k_max, args.steps)?;
    let points = k_sweep(&args.profiles, &grid)?;
    write_sweep_csv(output(args.out.as_deref())?, &points)
}

fn collusion(args: &CollusionArgs) -> Result<(), Error> {
    let rows = if args.sweep {
        let ks = linear_k_grid(1.0, args.sweep_k_max, args.sweep_steps)?;
        threshold_sweep(&args.sweep_n, &ks)?
    } else {
        vec![thresholds(args.n, args.k)?]
    };
    eprintln!("trigger strategy sustainable for discount rates up to {:.6}", trigger_threshold());
    write_thresholds_csv(output(args.out.as_deref())?, &rows)
}

fn equilibrium(args: &EquilibriumArgs) -> Result<(), Error> {
    let valuations = load_valuations(&args.valuations)?;
    let budgets = args.budgets.as_ref().map(load_budgets).transpose()?;
    let options = SolverOptions {
        max_iter: args.max_iter,
        ..SolverOptions::default()
    };
    let eq = match (args.k, args.pool) {
        (Some(k), _) => best_response(&valuations, k, budgets.as_ref(), &options)?,
        (None, Some(pool)) => best_response_endogenous_k(&valuations, pool, budgets.as_ref(), &options)?,
        (None, None) => unreachable!("clap requires --k or --pool"),
    };
    if !eq.converged {
        eprintln!("warning: best-response iteration stopped after {} rounds without converging", eq.iterations);
    }
    let planner = args
        .planner_pool
        .map(|pool| planner_optimum(&valuations, pool))
        .transpose()?;
    write_json(args.out.as_deref(), &json!({ "equilibrium": eq, "planner": planner }))
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let mut config = RoundConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.rounds == 0 {
        return Err(Error::Config("--rounds must be at least 1".into()));
    }
    let agents = config.all_agents()?;
    let rounds = run_rounds(&config, &agents, args.rounds)?;
    let mut summary = Vec::new();
    for (i, t) in rounds.iter().enumerate() {
        let dir = if args.rounds == 1 {
            args.out_dir.clone()
        } else {
            args.out_dir.join(format!("round-{i:03}"))
        };
        let files = write_round_outputs(t, &dir)?;
        let final_k: BTreeMap<_, _> = t
            .final_report
            .categories
            .iter()
            .map(|c| (c.category.to_string(), c.k))
            .collect();
        summary.push(json!({
            "round": i,
            "seed": t.seed,
            "contributions": t.contributions.len(),
            "final_k": final_k,
            "honest_mean_contribution": t.honest_mean_contribution(),
            "output_dir": dir,
            "report": files.report,
        }));
    }
    write_json(None, &summary)
}

fn reciprocal(args: &ReciprocalArgs) -> Result<(), Error> {
    let loaded = load_reporting(&args.contributions)?;
    let roster = load_teams(&args.teams)?;
    let graph = build_graph(&loaded.records, &roster);
    let weighting = match args.weighting {
        WeightingArg::Projects => Weighting::Projects,
        WeightingArg::Amount => Weighting::Amount,
    };
    let recip = reciprocity_stats(&graph, weighting)?;
    let cross = cross_category_stats(&graph)?;
    if recip.slope.is_none() {
        eprintln!("warning: reciprocity slope undefined (no project backs another)");
    }
    if cross.single_category {
        eprintln!("warning: single-category graph; cross-category shares are 0");
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let report_path = args.out_dir.join("reciprocal_report.csv");
    let cross_path = args.out_dir.join("cross_category.csv");
    write_reciprocal_report(output(Some(&report_path))?, &recip)?;
    write_cross_category(output(Some(&cross_path))?, &cross)?;
    write_json(
        None,
        &json!({
            "slope": recip.slope,
            "cross_slope_on_cross_outdegree": recip.cross_slope_on_cross_outdegree,
            "cross_slope_on_total_outdegree": recip.cross_slope_on_total_outdegree,
            "single_category": cross.single_category,
            "reciprocal_report": report_path,
            "cross_category": cross_path,
        }),
    )
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::NoMatchableProjects(_) | Error::Invariant(_) => 1,
        Error::Format { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Config(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Allocate(a) => allocate(a),
        Command::Diagnose(a) => diagnose(a),
        Command::SweepK(a) => sweep_k(a),
        Command::Collusion(a) => collusion(a),
        Command::Equilibrium(a) => equilibrium(a),
        Command::Simulate(a) => simulate(a),
        Command::Reciprocal(a) => reciprocal(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use dap_core::oracle::{exact_min_daps, simulate_des, validate, ExactStatus, SimConfig};
use dap_core::placement::{check, fixed_solution, plan_with, CheckOptions, IterationRecord, PlacementSolution, PlanContext};
use dap_core::scenario::{generate_synthetic, GeoOrigin, NodeKind, Profile};
use dap_core::{Error, Scenario};

use crate::cli::{Cli, Command, ExactArgs, GenerateArgs, PlanArgs, ReportArgs, ValidateArgs};
use crate::config::{self, Settings, ENV_PREFIX, KEYS};
use crate::io::{self, Header};
use crate::report::{self, SolutionFile};

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failure = 1,
    Usage = 2,
    Unconnected = 3,
    RadioBudget = 4,
    ValidationGap = 5,
}

impl Exit {
    /// Status for an error that escaped a command.
    pub fn for_error(e: &anyhow::Error) -> Exit {
        let budget = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::RadioBudgetInfeasible(_))));
        if budget {
            Exit::RadioBudget
        } else {
            Exit::Failure
        }
    }
}

struct Run<'a> {
    cli: &'a Cli,
    settings: Settings,
    header: Header,
}

impl Run<'_> {
    fn say(&self, text: &str) {
        if !self.cli.quiet {
            print!("{text}");
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        let dir = self.cli.out.as_path();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out_dir()?.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    fn load_scenario(&self, path: &Path) -> Result<(Scenario, Option<GeoOrigin>)> {
        let (nodes, origin) = io::read_nodes(path, &self.settings)?;
        Ok((self.settings.scenario(nodes)?, origin))
    }
}

pub fn run(cli: &Cli) -> Result<Exit> {
    if let Some(n) = cli.threads {
        ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let settings = config::load(cli.config.as_deref(), &cli.sets)?;
    let header = Header::new(cli.seed, &settings);
    let run = Run { cli, settings, header };
    match &cli.command {
        Command::Generate(a) => generate(&run, a),
        Command::Plan(a) => plan(&run, a),
        Command::Validate(a) => validate_cmd(&run, a),
        Command::Exact(a) => exact(&run, a),
        Command::Report(a) => report_cmd(&run, a),
        Command::Keys => {
            let mut text = String::new();
            for (k, d) in KEYS {
                let _ = writeln!(text, "{k:34} {d}");
            }
            let _ = writeln!(text, "\nenvironment: {ENV_PREFIX}<KEY> with `.` written as `__`, e.g. {ENV_PREFIX}SIM__DURATION");
            print!("{text}");
            Ok(Exit::Ok)
        }
    }
}

fn default_area(profile: Profile, sms: usize) -> f64 {
    sms as f64 / profile.nominal_density()
}

/// Synthetic layout with antenna heights taken from the settings.
fn synthetic_nodes(
    settings: &Settings,
    profile: Profile,
    sms: usize,
    poles: usize,
    area: Option<f64>,
    seed: u64,
) -> Result<Vec<dap_core::scenario::Node>> {
    let area = area.unwrap_or_else(|| default_area(profile, sms));
    let mut nodes = generate_synthetic(sms, poles, area, profile, seed)?.nodes;
    for n in &mut nodes {
        n.height = match n.kind {
            NodeKind::SmartMeter => settings.sm_height,
            NodeKind::Pole => settings.dap_height,
        };
    }
    Ok(nodes)
}

fn generate(run: &Run<'_>, a: &GenerateArgs) -> Result<Exit> {
    let profile: Profile = a.profile.into();
    let poles = a.poles.unwrap_or(a.sms);
    let area = a.area.unwrap_or_else(|| default_area(profile, a.sms));
    let nodes = synthetic_nodes(&run.settings, profile, a.sms, poles, Some(area), run.cli.seed)?;
    let mut csv = Vec::new();
    io::write_nodes(&mut csv, &run.header, &nodes)?;
    run.write("scenario.csv", std::str::from_utf8(&csv)?)?;
    run.write("planner.conf", &(run.header.line() + &run.settings.render()))?;
    run.say(&format!(
        "{} meters, {} poles on {:.4} km² ({}, {:.1} meters/km²) -> {}\n",
        a.sms,
        poles,
        area,
        profile.as_str(),
        a.sms as f64 / area,
        run.cli.out.display()
    ));
    Ok(Exit::Ok)
}

fn plan(run: &Run<'_>, a: &PlanArgs) -> Result<Exit> {
    let start = Instant::now();
    let (scenario, origin) = run.load_scenario(&a.scenario)?;
    let ctx = PlanContext::new(&scenario)?;
    let sol = plan_with(&ctx, &run.settings.plan_options())?;
    if a.check {
        let opts = CheckOptions { capacity: run.settings.capacity_scope, eval: run.settings.eval_options() };
        let violations = check(&ctx, &sol, &opts)?;
        if !violations.is_empty() {
            for v in violations.iter().take(20) {
                eprintln!("violation: {v:?}");
            }
            bail!("solution fails {} constraint checks", violations.len());
        }
    }
    let dir = run.out_dir()?;
    report::write_plan_reports(dir, &run.header, &ctx, &sol, origin)?;
    report::write_stats(dir, &run.header, "plan", start.elapsed().as_secs_f64(), rayon::current_num_threads())?;
    run.say(&report::summary_text(&run.header, &ctx, &sol));
    if sol.unconnected.is_empty() {
        Ok(Exit::Ok)
    } else {
        eprintln!("warning: {} meters left unconnected", sol.unconnected.len());
        Ok(Exit::Unconnected)
    }
}

/// Rebuilds a stored solution against `ctx`: routes the listed meters to the
/// listed DAPs and checks that every parent matches the file.
pub fn restore_solution(ctx: &PlanContext<'_>, settings: &Settings, file: &SolutionFile) -> Result<PlacementSolution> {
    let g = &ctx.graph;
    let index = |id: dap_core::NodeId| g.index_of(id).ok_or_else(|| anyhow!("solution names node {} missing from the scenario", id.0));
    let mut daps = Vec::with_capacity(file.daps.len());
    for &id in &file.daps {
        let i = index(id)?;
        ensure!(g.kind(i) == NodeKind::Pole, "DAP {} is not a pole", id.0);
        daps.push(i);
    }
    daps.sort_by_key(|&i| g.id(i));
    let mut active: Vec<bool> = (0..g.len()).map(|i| g.is_sm(i)).collect();
    for &id in &file.pruned {
        active[index(id)?] = false;
    }
    let mut sol = fixed_solution(ctx, &daps, &active, &settings.eval_options())?;
    ensure!(file.meters.len() == ctx.meters.len(), "solution lists {} meters, scenario has {}", file.meters.len(), ctx.meters.len());
    for m in &file.meters {
        let i = index(m.id)?;
        let parent = sol.forest.parent[i].map(|p| g.id(p.index()));
        ensure!(
            parent == m.parent,
            "meter {} routes via {:?} under the current scenario and configuration, the solution says {:?}",
            m.id.0,
            parent.map(|p| p.0),
            m.parent.map(|p| p.0)
        );
    }
    sol.pruned = file.pruned.clone();
    sol.phase1_daps = file.phase1_daps;
    sol.stopped_by_guard = file.stopped_by_guard;
    sol.iterations = file
        .iterations
        .iter()
        .map(|r| IterationRecord {
            daps: r.daps,
            added: r.added,
            relocated: r.relocated,
            connected: r.connected,
            satisfied: r.satisfied,
            low_reliability: r.low_reliability,
        })
        .collect();
    Ok(sol)
}

fn validate_cmd(run: &Run<'_>, a: &ValidateArgs) -> Result<Exit> {
    let start = Instant::now();
    let (scenario, _) = run.load_scenario(&a.scenario)?;
    let ctx = PlanContext::new(&scenario)?;
    let sol = match &a.solution {
        Some(p) => restore_solution(&ctx, &run.settings, &SolutionFile::read(p)?)?,
        None => plan_with(&ctx, &run.settings.plan_options())?,
    };
    let mut evaluation = sol.evaluation.clone();
    if let Some(delta) = a.corrupt_analytic {
        for r in evaluation.class_reliability.iter_mut().flatten() {
            *r = (*r - delta).clamp(0.0, 1.0);
        }
    }
    let sim = &run.settings.sim;
    let config = SimConfig { duration: sim.duration, warmup: sim.warmup, seed: run.cli.seed };
    let dir = run.out_dir()?;
    let summary = if a.samples {
        let path = dir.join("des_samples.csv");
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = report::SampleWriter::new(BufWriter::new(f), &run.header, &scenario.traffic)?;
        let mut failure = None;
        let summary = simulate_des(&ctx, &sol.forest, &config, |s| {
            if failure.is_none() {
                failure = writer.write(s).err();
            }
        });
        if let Some(e) = failure {
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        writer.finish()?;
        summary
    } else {
        simulate_des(&ctx, &sol.forest, &config, |_| {})
    };
    let result = validate(&ctx, &evaluation, &summary, &run.settings.validation_options());
    let classes = &scenario.traffic;
    run.write("validation.csv", &report::validation_csv(&run.header, &result, classes))?;
    run.write("validation_pooled.csv", &report::validation_pooled_csv(&run.header, &result, classes))?;
    let text = report::validation_summary(&run.header, &result, classes, summary.packets);
    run.write("validation_summary.txt", &text)?;
    report::write_stats(dir, &run.header, "validate", start.elapsed().as_secs_f64(), rayon::current_num_threads())?;
    run.say(&text);
    Ok(if result.passed() { Exit::Ok } else { Exit::ValidationGap })
}

struct ExactRow {
    name: String,
    meters: usize,
    poles: usize,
    heuristic: usize,
    oracle: usize,
    status: ExactStatus,
    heuristic_s: f64,
    oracle_s: f64,
}

impl ExactRow {
    fn ratio(&self) -> f64 {
        if self.oracle == 0 {
            if self.heuristic == 0 { 1.0 } else { f64::INFINITY }
        } else {
            self.heuristic as f64 / self.oracle as f64
        }
    }
}

fn exact_one(run: &Run<'_>, name: String, scenario: &Scenario) -> Result<ExactRow> {
    let ctx = PlanContext::new(scenario)?;
    let t0 = Instant::now();
    let sol = plan_with(&ctx, &run.settings.plan_options())?;
    let heuristic_s = t0.elapsed().as_secs_f64();
    let timeout = run.settings.exact.timeout;
    let t1 = Instant::now();
    let abort = || timeout > 0.0 && t1.elapsed().as_secs_f64() > timeout;
    let res = exact_min_daps(&ctx, &run.settings.exact_limits(), &run.settings.eval_options(), &abort)?;
    Ok(ExactRow {
        name,
        meters: ctx.meters.len(),
        poles: ctx.poles.len(),
        heuristic: sol.dap_count(),
        oracle: res.count,
        status: res.status,
        heuristic_s,
        oracle_s: t1.elapsed().as_secs_f64(),
    })
}

fn exact(run: &Run<'_>, a: &ExactArgs) -> Result<Exit> {
    let mut rows = Vec::new();
    let instance = |r: Result<ExactRow>| -> Result<ExactRow> {
        r.map_err(|e| match e.downcast_ref::<Error>() {
            Some(Error::OversizeInstance(msg)) => anyhow!("refused: {msg}"),
            _ => e,
        })
    };
    if let Some(path) = &a.scenario {
        let (scenario, _) = run.load_scenario(path)?;
        rows.push(instance(exact_one(run, path.display().to_string(), &scenario))?);
    } else {
        let profile: Profile = a.profile.into();
        for k in 0..a.sweep {
            let seed = run.cli.seed + k;
            let nodes = synthetic_nodes(&run.settings, profile, a.sms, a.poles, a.area, seed)?;
            let scenario = run.settings.scenario(nodes)?;
            rows.push(instance(exact_one(run, format!("{}-seed{seed}", profile.as_str()), &scenario))?);
        }
    }
    let mut csv = run.header.line() + "instance,sms,poles,heuristic,oracle,status,ratio,ln_sms,heuristic_s,oracle_s\n";
    let mut table = format!(
        "{:<22} {:>4} {:>5} {:>9} {:>6} {:>6} {:>6} {:>10} {:>9}\n",
        "instance", "sms", "poles", "heuristic", "oracle", "ratio", "ln(N)", "heur. s", "oracle s"
    );
    for r in &rows {
        let status = match r.status {
            ExactStatus::Optimal => "optimal",
            ExactStatus::Incomplete => "timeout",
        };
        let ln_n = (r.meters as f64).ln();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{status},{},{ln_n},{},{}",
            r.name,
            r.meters,
            r.poles,
            r.heuristic,
            r.oracle,
            r.ratio(),
            r.heuristic_s,
            r.oracle_s
        );
        let oracle = match r.status {
            ExactStatus::Optimal => r.oracle.to_string(),
            ExactStatus::Incomplete => format!("<={}", r.oracle),
        };
        let _ = writeln!(
            table,
            "{:<22} {:>4} {:>5} {:>9} {:>6} {:>6.3} {:>6.3} {:>10.3} {:>9.3}",
            r.name,
            r.meters,
            r.poles,
            r.heuristic,
            oracle,
            r.ratio(),
            ln_n,
            r.heuristic_s,
            r.oracle_s
        );
    }
    let mut ratios: Vec<f64> = rows.iter().map(ExactRow::ratio).collect();
    ratios.sort_by(f64::total_cmp);
    if !ratios.is_empty() {
        let n = ratios.len();
        let median = if n % 2 == 1 { ratios[n / 2] } else { 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]) };
        let _ = writeln!(table, "median ratio {median:.3} over {n} instances");
    }
    run.write("exact.csv", &csv)?;
    run.say(&table);
    Ok(Exit::Ok)
}

fn report_cmd(run: &Run<'_>, a: &ReportArgs) -> Result<Exit> {
    let (scenario, origin) = run.load_scenario(&a.scenario)?;
    let ctx = PlanContext::new(&scenario)?;
    let sol = restore_solution(&ctx, &run.settings, &SolutionFile::read(&a.solution)?)?;
    report::write_plan_reports(run.out_dir()?, &run.header, &ctx, &sol, origin)?;
    run.say(&report::summary_text(&run.header, &ctx, &sol));
    Ok(Exit::Ok)
}

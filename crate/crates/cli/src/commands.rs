use std::fs;
use std::path::Path;

use fbsde_hjb::config::{ModelConfig, ProblemConfig, UtilityConfig};
use fbsde_hjb::driver::ito_ventzell_steps;
use fbsde_hjb::mc::entropy_closed_form;
use fbsde_hjb::{
    bsde_residual, check_comparison_hypotheses, merton_log_value, minimal_risk_identity, reconstruct_backward,
    riskmin_closed_form, simulate_forward, solve, BsdeResidual, BuiltProblem, ControlPolicy, ResidualStats,
    SolveReport, SpaceTimeGrid,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::run_config::{command_name, Cli, CliError, CommandKind, Format, RunConfig};

const ALGEBRAIC_TOL: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-3;
const MC_STANDARD_ERRORS: f64 = 3.0;
const ORDER_RATIO: f64 = 1.4;
/// Residuals below this count as exact and pass any order check.
const EXACT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: String,
    value: f64,
    reference: f64,
    tolerance: f64,
    verdict: &'static str,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, reference: f64, tolerance: f64, pass: bool) -> Self {
        Check { name: name.into(), value, reference, tolerance, verdict: if pass { "PASS" } else { "FAIL" } }
    }

    fn pass(&self) -> bool {
        self.verdict == "PASS"
    }
}

struct Outcome {
    summary: Value,
    checks: Vec<Check>,
    csv: Vec<(&'static str, Vec<u8>)>,
    table: Option<String>,
}

pub fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = RunConfig::from_cli(cli.command, &cli.flags)?;
    let outcome = match cfg.command {
        CommandKind::Solve => solve_cmd(&cfg)?,
        CommandKind::Simulate => simulate_cmd(&cfg)?,
        CommandKind::Verify => verify_cmd(&cfg)?,
        CommandKind::Entropy => entropy_cmd(&cfg)?,
        CommandKind::Bench => bench_cmd(&cfg)?,
    };
    let pass = outcome.checks.iter().all(Check::pass);
    let mut summary = outcome.summary;
    summary["command"] = json!(command_name(cfg.command));
    summary["tolerances"] = json!({
        "algebraic": ALGEBRAIC_TOL,
        "oracle_relative": ORACLE_TOL,
        "mc_standard_errors": MC_STANDARD_ERRORS,
        "order_ratio": ORDER_RATIO,
    });
    summary["checks"] = serde_json::to_value(&outcome.checks).expect("checks serialize");
    summary["verdict"] = json!(if pass { "PASS" } else { "FAIL" });
    // serde_json's default map is ordered, so keys come out sorted
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";

    let format = cfg.format;
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(|source| io(dir, source))?;
        let path = dir.join("summary.json");
        fs::write(&path, &text).map_err(|source| io(&path, source))?;
        for (name, bytes) in &outcome.csv {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|source| io(&path, source))?;
        }
    }
    match (format, &outcome.table) {
        (Some(Format::Csv), _) if cfg.out.is_none() => {
            if let Some((_, bytes)) = outcome.csv.first() {
                print!("{}", String::from_utf8_lossy(bytes));
            }
        }
        (Some(Format::Csv), _) => {}
        (None, Some(table)) => print!("{table}"),
        _ => print!("{text}"),
    }
    Ok(pass)
}

fn io(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

fn grid_summary(grid: &SpaceTimeGrid) -> Value {
    json!({ "nx": grid.nx(), "nt": grid.nt(), "dx": grid.dx(), "max_dt": grid.max_dt(),
            "x_min": grid.x_min(), "x_max": grid.x_max() })
}

/// Closed-form `ŷ(0, x0)` when the model has one.
fn oracle(problem: &ProblemConfig, built: &BuiltProblem) -> Result<Option<f64>, CliError> {
    let Some(market) = &built.market else { return Ok(None) };
    Ok(match &problem.model {
        ModelConfig::Riskmin { .. } => Some(riskmin_closed_form(market)?.y_hat(0.0, market.x0)),
        ModelConfig::Merton { utility: UtilityConfig::Log, .. } => Some(merton_log_value(0.0, market.x0, market)?),
        _ => None,
    })
}

fn oracle_check(name: &str, value: f64, oracle: f64) -> Check {
    let tol = ORACLE_TOL * oracle.abs().max(1.0);
    Check::new(name, value, oracle, tol, (value - oracle).abs() <= tol)
}

fn solved(cfg: &RunConfig) -> Result<(ProblemConfig, BuiltProblem, SolveReport), CliError> {
    let problem = cfg.resolve_problem("riskmin")?;
    let built = problem.build()?;
    let report = solve(&built.spec, &built.grid)?;
    Ok((problem, built, report))
}

fn solve_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (problem, built, report) = solved(cfg)?;
    let mut checks = Vec::new();
    if let Some(o) = oracle(&problem, &built)? {
        checks.push(oracle_check("y0_vs_closed_form", report.y0_at_x0, o));
    }
    let mut csv = Vec::new();
    report.field.write_csv(&mut csv, Some(&report.control_field)).map_err(|e| io(Path::new("field.csv"), e))?;
    let summary = json!({
        "config": cfg.resolved(Some(problem), None, None),
        "seed": cfg.seed(),
        "grid": grid_summary(&built.grid),
        "y0_at_x0": report.y0_at_x0,
        "diagnostics": report.diagnostics,
        "hypotheses": check_comparison_hypotheses(&built.spec, &built.declarations),
    });
    Ok(Outcome { summary, checks, csv: vec![("field.csv", csv)], table: None })
}

fn simulate_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (problem, built, report) = solved(cfg)?;
    let n_paths = cfg.mc.n_paths.unwrap_or(10_000);
    let dt = cfg.mc.dt.unwrap_or(1e-2);
    let policy = ControlPolicy::Field { grid: built.grid.clone(), values: report.control_field.clone() };
    let bundle = simulate_forward(&built.spec, &policy, n_paths, dt, cfg.seed())?;
    let bundle = reconstruct_backward(&report.field, bundle, &built.spec)?;
    let stats = bundle.stats(&built.spec);
    let mut checks = Vec::new();
    if !built.spec.jumps.is_empty() {
        let n = n_paths as f64;
        let se = (stats.expected_jump_count / n).sqrt();
        checks.push(Check::new(
            "mean_jump_count",
            stats.mean_jump_count,
            stats.expected_jump_count,
            4.0 * se,
            (stats.mean_jump_count - stats.expected_jump_count).abs() <= 4.0 * se,
        ));
    }
    let mut csv = Vec::new();
    bundle.write_csv(&mut csv).map_err(|e| io(Path::new("bundle.csv"), e))?;
    let summary = json!({
        "config": cfg.resolved(Some(problem), Some(n_paths), Some(dt)),
        "seed": cfg.seed(),
        "grid": grid_summary(&built.grid),
        "bundle": stats,
        "extrapolated_fraction": bundle.extrapolated_fraction,
        "y0_at_x0": report.y0_at_x0,
    });
    Ok(Outcome { summary, checks, csv: vec![("bundle.csv", csv)], table: None })
}

struct ResidualRun {
    bsde: BsdeResidual,
    ito_ventzell: ResidualStats,
}

fn residuals(built: &BuiltProblem, report: &SolveReport, n_paths: usize, dt: f64, seed: u64) -> Result<ResidualRun, CliError> {
    let policy = ControlPolicy::Field { grid: built.grid.clone(), values: report.control_field.clone() };
    let bundle = simulate_forward(&built.spec, &policy, n_paths, dt, seed)?;
    let bundle = reconstruct_backward(&report.field, bundle, &built.spec)?;
    let bsde = bsde_residual(&built.spec, &bundle)?;
    let mut steps = Vec::new();
    for p in 0..n_paths {
        steps.extend(ito_ventzell_steps(&report.field, &built.spec, &bundle, p, dt)?);
    }
    Ok(ResidualRun { bsde, ito_ventzell: ResidualStats::from_values(&steps) })
}

fn order_check(name: &str, coarse: f64, fine: f64) -> Check {
    let ratio = if fine > 0.0 { coarse / fine } else { f64::INFINITY };
    let pass = coarse.max(fine) <= EXACT_FLOOR || ratio >= ORDER_RATIO;
    Check::new(name, ratio, 2.0, ORDER_RATIO, pass)
}

fn verify_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (problem, built, report) = solved(cfg)?;
    let n_paths = cfg.mc.n_paths.unwrap_or(1_000);
    let dt = cfg.mc.dt.unwrap_or(1e-2);
    let coarse = residuals(&built, &report, n_paths, dt, cfg.seed())?;
    let fine = residuals(&built, &report, n_paths, dt / 2.0, cfg.seed())?;
    let checks = vec![
        Check::new(
            "terminal_mismatch",
            coarse.bsde.terminal_mismatch,
            0.0,
            ORACLE_TOL,
            coarse.bsde.terminal_mismatch <= ORACLE_TOL,
        ),
        order_check("bsde_residual_halving", coarse.bsde.step.rms, fine.bsde.step.rms),
        order_check("ito_ventzell_residual_halving", coarse.ito_ventzell.rms, fine.ito_ventzell.rms),
    ];
    let table = checks
        .iter()
        .map(|c| format!("{:<32} {:>14.6e} {:>6}\n", c.name, c.value, c.verdict))
        .collect::<String>();
    let summary = json!({
        "config": cfg.resolved(Some(problem), Some(n_paths), Some(dt)),
        "seed": cfg.seed(),
        "grid": grid_summary(&built.grid),
        "bsde_residual": { "dt": coarse.bsde, "half_dt": fine.bsde },
        "ito_ventzell_residual": { "dt": coarse.ito_ventzell, "half_dt": fine.ito_ventzell },
    });
    Ok(Outcome { summary, checks, csv: vec![], table: Some(table) })
}

fn entropy_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let problem = cfg.resolve_problem("riskmin")?;
    let built = problem.build()?;
    let market = built
        .market
        .ok_or_else(|| CliError::Usage("entropy needs a merton or riskmin model (b and sigma curves)".into()))?;
    let n_paths = cfg.mc.n_paths.unwrap_or(100_000);
    let dt = cfg.mc.dt.unwrap_or(1e-3);
    let id = minimal_risk_identity(&market, n_paths, dt, cfg.seed())?;
    let e = id.entropy;
    let b = market.b.clone();
    let s = market.sigma.clone();
    let closed = entropy_closed_form(&move |t| b(t), &move |t| s(t), market.horizon);
    let checks = vec![
        Check::new(
            "entropy_within_3se",
            e.entropy_hat,
            e.closed_form,
            MC_STANDARD_ERRORS * e.std_err,
            (e.entropy_hat - e.closed_form).abs() <= MC_STANDARD_ERRORS * e.std_err,
        ),
        Check::new("minimal_risk_identity", id.identity_gap, 0.0, 1e-10, id.identity_gap <= 1e-10),
    ];
    let summary = json!({
        "config": cfg.resolved(Some(problem), Some(n_paths), Some(dt)),
        "seed": cfg.seed(),
        "entropy": e,
        "closed_form": closed,
        "rho_min": id.rho_min,
        "x0": id.x0,
    });
    Ok(Outcome { summary, checks, csv: vec![], table: None })
}

fn bench_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let names: Vec<&str> = match (&cfg.problem, &cfg.spec) {
        (_, Some(_)) => vec!["spec"],
        (Some(p), None) => vec![p.as_str()],
        (None, None) => vec!["riskmin", "merton-log"],
    };
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut table = format!(
        "{:<12} {:>16} {:>16} {:>11} {:>11} {:>7}\n",
        "problem", "solver", "oracle", "abs_err", "rel_err", "verdict"
    );
    for name in names {
        let mut single = cfg.clone();
        if name != "spec" {
            single.problem = Some(name.to_string());
        }
        let problem = single.resolve_problem(name)?;
        let built = problem.build()?;
        let report = solve(&built.spec, &built.grid)?;
        let Some(o) = oracle(&problem, &built)? else {
            return Err(CliError::Usage(format!("problem `{name}` has no closed form to bench against")));
        };
        let check = oracle_check(name, report.y0_at_x0, o);
        let abs = (report.y0_at_x0 - o).abs();
        let rel = abs / o.abs().max(f64::MIN_POSITIVE);
        table.push_str(&format!(
            "{:<12} {:>16.10} {:>16.10} {:>11.3e} {:>11.3e} {:>7}\n",
            name, report.y0_at_x0, o, abs, rel, check.verdict
        ));
        rows.push(json!({
            "problem": name,
            "spec": problem,
            "grid": grid_summary(&built.grid),
            "solver": report.y0_at_x0,
            "oracle": o,
            "abs_err": abs,
            "rel_err": rel,
        }));
        checks.push(check);
    }
    let summary = json!({
        "config": cfg.resolved(None, None, None),
        "seed": cfg.seed(),
        "rows": rows,
    });
    Ok(Outcome { summary, checks, csv: vec![], table: Some(table) })
}

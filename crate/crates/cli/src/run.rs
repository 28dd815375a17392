//! The `solve`, `gridsearch` and `eval` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde_json::{json, Value};
use ulrot::io::{save_matrix_binary, write_atomic};
use ulrot::metrics::{barycentric_project, f1_transfer, mass_pct, pearson_rho, F1Scores};
use ulrot::solve::{solve_ulfgw, solve_ulgw, solve_ulot};
use ulrot::{GradientMode, LowRankCoupling, SolveReport, SolverConfig};

use crate::config::{Problem, RunConfig};
use crate::data::{held_out, load_matrix, load_vector, prepare, Prepared};
use crate::error::{CliError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Flags shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Worker threads for grid search; `None` uses every core.
    pub threads: Option<usize>,
    pub emit_plot_data: bool,
    pub gradient_mode: Option<GradientMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub mass_pct: f64,
    pub val_rho: Option<f64>,
    pub val_rho_per_column: Vec<Option<f64>>,
    pub test_rho: Option<f64>,
    pub test_rho_per_column: Vec<Option<f64>>,
    pub f1: Option<F1Scores>,
}

pub fn solve(prep: &Prepared, problem: Problem, cfg: &SolverConfig) -> Result<SolveReport> {
    let report = match problem {
        Problem::Ot => solve_ulot(&prep.mu, &prep.nu, prep.cost.as_ref().expect("ot cost"), cfg)?,
        Problem::Gw => solve_ulgw(&prep.mu, &prep.nu, prep.geom.as_ref().expect("gw geometry"), cfg)?,
        Problem::Fgw => solve_ulfgw(
            &prep.mu,
            &prep.nu,
            prep.cost.as_ref().expect("fgw cost"),
            prep.geom.as_ref().expect("fgw geometry"),
            cfg,
        )?,
    };
    Ok(report)
}

fn rho(c: &LowRankCoupling, prep: &Prepared, cols: &[usize], cfg: &RunConfig) -> Result<(Option<f64>, Vec<Option<f64>>)> {
    match held_out(prep, cols) {
        Some((target, truth)) => {
            let pred = barycentric_project(c, &target.view(), &prep.target.weights.view(), cfg.projection)?;
            let r = pearson_rho(&pred.view(), &truth.view())?;
            Ok((r.mean, r.per_feature))
        }
        None => Ok((None, Vec::new())),
    }
}

pub fn evaluate(c: &LowRankCoupling, prep: &Prepared, cfg: &RunConfig) -> Result<RunMetrics> {
    if c.n() != prep.source.len() || c.m() != prep.target.len() {
        return Err(CliError::Input(format!(
            "coupling is {}x{}, data is {}x{}",
            c.n(),
            c.m(),
            prep.source.len(),
            prep.target.len()
        )));
    }
    let (val_rho, val_rho_per_column) = rho(c, prep, &cfg.val_columns, cfg)?;
    let (test_rho, test_rho_per_column) = rho(c, prep, &cfg.test_columns, cfg)?;
    let f1 = match (&prep.source.labels, &prep.target.labels) {
        (Some(src), Some(tgt)) => Some(f1_transfer(c, tgt, &prep.target.weights.view(), src, cfg.projection)?),
        _ => None,
    };
    Ok(RunMetrics { mass_pct: mass_pct(c), val_rho, val_rho_per_column, test_rho, test_rho_per_column, f1 })
}

fn metrics_json(m: &RunMetrics) -> Value {
    json!({
        "mass_pct": m.mass_pct,
        "val_rho": m.val_rho,
        "val_rho_per_column": m.val_rho_per_column,
        "test_rho": m.test_rho,
        "test_rho_per_column": m.test_rho_per_column,
        "f1_macro": m.f1.map(|f| f.macro_avg),
        "f1_micro": m.f1.map(|f| f.micro),
        "f1_weighted": m.f1.map(|f| f.weighted),
    })
}

fn solver_json(cfg: &SolverConfig) -> Value {
    json!({
        "rank": cfg.rank,
        "tau1": cfg.tau1,
        "tau2": cfg.tau2,
        "gamma0": cfg.gamma0,
        "epsilon": cfg.epsilon,
        "alpha": cfg.alpha,
        "delta": cfg.delta,
        "inner_delta": cfg.inner_delta,
        "max_outer": cfg.max_outer,
        "max_inner": cfg.max_inner,
        "init": format!("{:?}", cfg.init),
        "seed": cfg.seed,
        "warm_start": cfg.warm_start_duals,
        "gradient_mode": format!("{:?}", cfg.gradient_mode),
        "inner_solver": format!("{:?}", cfg.inner_solver),
        "step_rule": format!("{:?}", cfg.step_rule),
    })
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn trace_csv(report: &SolveReport) -> String {
    let mut out = String::from("iteration,objective,gamma,inner_iterations\n");
    for (i, ((obj, gamma), inner)) in
        report.objective_trace.iter().zip(&report.gamma_trace).zip(&report.inner_iteration_counts).enumerate()
    {
        let _ = writeln!(out, "{},{obj},{gamma},{inner}", i + 1);
    }
    out
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn load_config(path: &Path, opts: &Options) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(mode) = opts.gradient_mode {
        cfg.solver.gradient_mode = mode;
    }
    Ok(cfg)
}

pub fn factor_paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join("Q.bin"), dir.join("R.bin"), dir.join("g.bin")]
}

/// Runs one solve and writes `result.json` and the factor files.
pub fn cmd_solve(config_path: &Path, opts: &Options) -> Result<i32> {
    let cfg = load_config(config_path, opts)?;
    let prep = prepare(&cfg)?;
    let report = solve(&prep, cfg.problem, &cfg.solver)?;
    let metrics = evaluate(&report.coupling, &prep, &cfg)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    let [q, r, g] = factor_paths(&cfg.output_dir);
    let c = &report.coupling;
    save_matrix_binary(&q, c.q())?;
    save_matrix_binary(&r, c.r())?;
    save_matrix_binary(&g, &c.g().clone().insert_axis(ndarray::Axis(1)))?;
    let result = json!({
        "timestamp": timestamp(),
        "problem": cfg.problem.as_str(),
        "config": solver_json(&cfg.solver),
        "objective": report.objective,
        "mass": report.mass,
        "outer_iterations": report.outer_iterations,
        "converged": report.converged,
        "objective_trace": report.objective_trace,
        "inner_iteration_counts": report.inner_iteration_counts,
        "metrics": metrics_json(&metrics),
    });
    write_atomic(&cfg.output_dir.join("result.json"), &json_bytes(&result))?;
    if opts.emit_plot_data {
        write_atomic(&cfg.output_dir.join("trace.csv"), trace_csv(&report).as_bytes())?;
    }
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// Hyperparameters of one grid job.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub rank: usize,
    pub epsilon: f64,
    pub tau: f64,
    pub alpha: f64,
}

pub fn grid_points(cfg: &RunConfig) -> Vec<GridPoint> {
    let alphas = if cfg.problem == Problem::Fgw { cfg.grid.alpha.clone() } else { vec![cfg.solver.alpha] };
    let mut out = Vec::new();
    for &rank in &cfg.grid.rank {
        for &epsilon in &cfg.grid.epsilon {
            for &tau in &cfg.grid.tau {
                for &alpha in &alphas {
                    out.push(GridPoint { rank, epsilon, tau, alpha });
                }
            }
        }
    }
    out
}

pub const GRID_HEADER: &str = "rank,reg,tau,alpha,val_rho,test_rho,mass_pct,f1_macro,f1_micro,f1_weighted,\
objective,outer_iterations,converged,status";

struct GridRow {
    point: GridPoint,
    outcome: std::result::Result<(SolveReport, RunMetrics), String>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl GridRow {
    fn val_rho(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|(_, m)| m.val_rho).filter(|v| v.is_finite())
    }

    fn csv(&self) -> String {
        let p = &self.point;
        let head = format!("{},{},{},{}", p.rank, p.epsilon, p.tau, p.alpha);
        match &self.outcome {
            Ok((rep, m)) => format!(
                "{head},{},{},{},{},{},{},{},{},{},ok",
                opt(m.val_rho),
                opt(m.test_rho),
                m.mass_pct,
                opt(m.f1.map(|f| f.macro_avg)),
                opt(m.f1.map(|f| f.micro)),
                opt(m.f1.map(|f| f.weighted)),
                rep.objective,
                rep.outer_iterations,
                rep.converged
            ),
            Err(_) => format!("{head},,,,,,,,,,failed"),
        }
    }
}

fn run_point(prep: &Prepared, cfg: &RunConfig, p: &GridPoint) -> std::result::Result<(SolveReport, RunMetrics), String> {
    let solver = SolverConfig { rank: p.rank, epsilon: p.epsilon, tau1: p.tau, tau2: p.tau, alpha: p.alpha, ..cfg.solver.clone() };
    let report = solve(prep, cfg.problem, &solver).map_err(|e| e.to_string())?;
    let metrics = evaluate(&report.coupling, prep, cfg).map_err(|e| e.to_string())?;
    Ok((report, metrics))
}

/// Runs the Cartesian grid in parallel, ranks by validation correlation and
/// writes `grid.csv` and `best.json`.
pub fn cmd_gridsearch(config_path: &Path, opts: &Options) -> Result<i32> {
    let cfg = load_config(config_path, opts)?;
    if cfg.val_columns.is_empty() {
        return Err(CliError::Config("grid search needs val_columns".into()));
    }
    let points = grid_points(&cfg);
    if points.is_empty() {
        return Err(CliError::Grid("empty grid".into()));
    }
    let prep = prepare(&cfg)?;
    if prep.source.features.is_none() || prep.target.features.is_none() {
        return Err(CliError::MissingInput("features"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Grid(e.to_string()))?;
    let mut rows: Vec<GridRow> = pool.install(|| {
        points
            .par_iter()
            .map(|p| GridRow { point: p.clone(), outcome: run_point(&prep, &cfg, p) })
            .collect()
    });
    if rows.iter().all(|r| r.outcome.is_err()) {
        let first = rows[0].outcome.as_ref().err().cloned().unwrap_or_default();
        return Err(CliError::Grid(format!("all runs failed; first error: {first}")));
    }
    // Best validation ρ first; undefined ρ and failures last; stable otherwise.
    rows.sort_by(|a, b| match (a.val_rho(), b.val_rho()) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.outcome.is_err().cmp(&b.outcome.is_err()),
    });

    let mut csv = String::from(GRID_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv());
        csv.push('\n');
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_atomic(&cfg.output_dir.join("grid.csv"), csv.as_bytes())?;

    let best = &rows[0];
    let (report, metrics) = best.outcome.as_ref().expect("at least one run succeeded");
    let doc = json!({
        "header": GRID_HEADER,
        "row": best.csv(),
        "selected_by": "val_rho",
        "rank": best.point.rank,
        "reg": best.point.epsilon,
        "tau": best.point.tau,
        "alpha": best.point.alpha,
        "objective": report.objective,
        "converged": report.converged,
        "metrics": metrics_json(metrics),
    });
    write_atomic(&cfg.output_dir.join("best.json"), &json_bytes(&doc))?;
    Ok(EXIT_OK)
}

/// Evaluates saved factors against a run config's data; prints JSON.
pub fn cmd_eval(factors_dir: &Path, config_path: &Path, opts: &Options) -> Result<(i32, String)> {
    let cfg = load_config(config_path, opts)?;
    let [q, r, g] = factor_paths(factors_dir);
    let q: Array2<f64> = load_matrix(&q)?;
    let r: Array2<f64> = load_matrix(&r)?;
    let g: Array1<f64> = load_vector(&g)?;
    let coupling = LowRankCoupling::new(q, r, g)?;
    let prep = prepare(&cfg)?;
    let metrics = evaluate(&coupling, &prep, &cfg)?;
    let doc = json!({ "metrics": metrics_json(&metrics), "mass": coupling.mass() });
    Ok((EXIT_OK, serde_json::to_string_pretty(&doc).expect("serializable")))
}

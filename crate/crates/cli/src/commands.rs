//! Experiment commands and the report/manifest writing around them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use trudinger::discretization::{build_time_grid, TimeGrid};
use trudinger::estimates::{check_galerkin_estimate, gronwall_trace, EstimateReport};
use trudinger::geometry::{build_uniform_mesh, Mesh, NodalVector};
use trudinger::model::sweep_inequalities;
use trudinger::solver::{refine_study, solve, DiscreteSolution, ProblemSpec};
use trudinger::verification::{
    error_vs_oracle, gamma_squeeze, heat_sine_oracle, max_principle_check, separable_oracle, weak_form_residual,
    ExactSolution, TestField, TimeFactor, ORDER_TOLERANCE,
};
use trudinger::Error as CoreError;

use crate::config::{ConfigError, OracleChoice, OutputFormat, RunConfig};
use crate::emit::{
    fmt_float, json_bytes, to_value, Table, CONVERGENCE_HEADER, SOLUTION_HEADER, SQUEEZE_HEADER, TRACE_HEADER,
};
use crate::manifest::{RunManifest, MANIFEST_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SOLVE_FAILED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Component magnitude bound for sampled inequality pairs.
pub const SAMPLE_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Verify,
    Squeeze,
    Convergence,
    Ineq,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Squeeze => "squeeze",
            Command::Convergence => "convergence",
            Command::Ineq => "ineq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Signed margin; negative means the check failed.
    pub worst_slack: f64,
}

impl Check {
    fn new(name: &str, pass: bool, worst_slack: f64) -> Self {
        Check {
            name: name.into(),
            pass,
            worst_slack,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solve failed: {0}")]
    Solve(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Solve(_) => EXIT_SOLVE_FAILED,
        }
    }
}

/// Input problems surface as config errors, numerical breakdowns as solve
/// failures.
fn core_error(key: &str, e: CoreError) -> RunError {
    match e {
        CoreError::InvalidArgument(_) | CoreError::InvalidData(_) | CoreError::PreconditionFailure(_) => {
            RunError::Config(ConfigError::Invalid {
                key: key.into(),
                message: e.to_string(),
            })
        }
        other => RunError::Solve(other.to_string()),
    }
}

/// What a command produced before anything is written to disk.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Map<String, Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub timings: Vec<(String, f64)>,
    /// Set when a solve broke down; the partial results are still reported.
    pub solve_failure: Option<String>,
}

impl Outcome {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.push((phase.into(), t0.elapsed().as_secs_f64()));
        out
    }

    fn put(&mut self, key: &str, value: Value) {
        self.results.insert(key.into(), value);
    }

    pub fn exit_code(&self) -> i32 {
        if self.solve_failure.is_some() {
            EXIT_SOLVE_FAILED
        } else if self.checks.iter().all(|c| c.pass) {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

struct Setup {
    spec: ProblemSpec,
    oracle: Option<ExactSolution>,
    grid: TimeGrid,
    mesh: Mesh,
}

fn oracle_for(cfg: &RunConfig) -> Result<Option<ExactSolution>, RunError> {
    let p = cfg.exponent();
    let (a, b) = (cfg.problem.a, cfg.problem.b);
    let key = "experiment.oracle";
    match cfg.experiment.oracle {
        OracleChoice::None => Ok(None),
        OracleChoice::HeatSine => heat_sine_oracle(p, a, b).map(Some).map_err(|e| core_error(key, e)),
        OracleChoice::SeparableP => {
            let base = separable_oracle(p, cfg.experiment.oracle_resolution).map_err(|e| core_error(key, e))?;
            if (a, b) == (0.0, 1.0) {
                Ok(Some(base))
            } else {
                base.rescaled(a, b).map(Some).map_err(|e| core_error(key, e))
            }
        }
    }
}

/// Problem, oracle and discretization from the config. An oracle supplies
/// its own boundary data.
fn setup(cfg: &RunConfig, out: &mut Outcome) -> Result<Setup, RunError> {
    let oracle = out.time("oracle", || oracle_for(cfg))?;
    let boundary = match &oracle {
        Some(o) => o.boundary().map_err(|e| core_error("experiment.oracle", e))?,
        None => cfg.boundary_expr()?,
    };
    let p = &cfg.problem;
    let spec = ProblemSpec::new(cfg.exponent(), p.a, p.b, p.t_final, boundary).map_err(|e| core_error("problem", e))?;
    let grid = build_time_grid(p.t_final, cfg.discretization.steps).map_err(|e| core_error("discretization.steps", e))?;
    let mesh =
        build_uniform_mesh(cfg.discretization.elements, p.a, p.b).map_err(|e| core_error("discretization.elements", e))?;
    if let Some(o) = &oracle {
        out.put(
            "oracle",
            json!({
                "family": to_value(&o.family()),
                "rate": o.rate(),
                "unit_eigenvalue": o.unit_eigenvalue(),
                "end_value": o.end_value(),
                "certification_residual": o.certification_residual(),
            }),
        );
    }
    Ok(Setup { spec, oracle, grid, mesh })
}

/// Smallest `(tolerance − residual) / tolerance` over the steps.
fn residual_check(sol: &DiscreteSolution) -> Check {
    let slack = sol
        .records()
        .iter()
        .map(|r| (r.tolerance - r.residual) / r.tolerance)
        .fold(f64::INFINITY, f64::min);
    let slack = if slack.is_finite() { slack } else { 0.0 };
    Check::new("step_residuals", sol.is_complete() && sol.all_converged(), slack)
}

fn record_summary(sol: &DiscreteSolution) -> Value {
    json!({
        "steps": sol.grid().steps(),
        "completed_steps": sol.completed_steps(),
        "elements": sol.mesh().element_count(),
        "iterations": sol.records().iter().map(|r| r.iterations).collect::<Vec<_>>(),
        "residuals": sol.records().iter().map(|r| r.residual).collect::<Vec<_>>(),
        "tolerances": sol.records().iter().map(|r| r.tolerance).collect::<Vec<_>>(),
        "final_max_abs": sol.states().last().map(|s| s.max_abs()),
    })
}

fn estimate_check(reports: &[EstimateReport]) -> Check {
    // Margin of the linkage bound, relative to its right-hand side.
    let slack = reports
        .iter()
        .map(|r| {
            let rhs = r.uniform_bound_constant * r.ledger.term_a;
            if rhs == 0.0 && r.power_derivative_energy == 0.0 {
                0.0
            } else {
                (rhs - r.power_derivative_energy) / rhs.max(r.power_derivative_energy)
            }
        })
        .fold(f64::INFINITY, f64::min);
    let slack = if slack.is_finite() { slack } else { 0.0 };
    Check::new("galerkin_estimate", reports.iter().all(EstimateReport::pass), slack)
}

pub fn solution_table(sol: &DiscreteSolution) -> Table {
    let mut t = Table::new("solution", SOLUTION_HEADER);
    for (k, state) in sol.states().iter().enumerate() {
        let time = fmt_float(sol.grid().time(k));
        for (i, (x, v)) in sol.mesh().nodes().iter().zip(state.iter()).enumerate() {
            t.rows.push(vec![k.to_string(), time.clone(), i.to_string(), fmt_float(*x), fmt_float(*v)]);
        }
    }
    t
}

#[derive(Debug, Deserialize)]
struct SolutionRow {
    step: usize,
    time: f64,
    node: usize,
    x: f64,
    value: f64,
}

/// Reads states written in the solution CSV schema and checks they sit on
/// the configured grid and mesh.
pub fn read_solution_csv(path: &Path, grid: &TimeGrid, mesh: &Mesh) -> Result<Vec<NodalVector>, ConfigError> {
    let key = "experiment.solution_csv";
    let bad = |m: String| ConfigError::Invalid {
        key: key.into(),
        message: m,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != SOLUTION_HEADER {
        return Err(bad(format!("header {header:?} does not match {SOLUTION_HEADER:?}")));
    }
    let n = mesh.node_count();
    let mut states = vec![vec![f64::NAN; n]; grid.steps() + 1];
    let mut seen = 0usize;
    for row in reader.deserialize::<SolutionRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.step > grid.steps() || row.node >= n {
            return Err(bad(format!("row (step {}, node {}) is outside the grid", row.step, row.node)));
        }
        let (t, x) = (grid.time(row.step), mesh.nodes()[row.node]);
        if (row.time - t).abs() > 1e-12 * grid.t_final().max(1.0) || (row.x - x).abs() > 1e-12 * mesh.length().max(1.0) {
            return Err(bad(format!("row (step {}, node {}) does not match the configured grid", row.step, row.node)));
        }
        if !states[row.step][row.node].is_nan() {
            return Err(bad(format!("duplicate row (step {}, node {})", row.step, row.node)));
        }
        states[row.step][row.node] = row.value;
        seen += 1;
    }
    if seen != n * (grid.steps() + 1) {
        return Err(bad(format!("expected {} rows, found {seen}", n * (grid.steps() + 1))));
    }
    Ok(states.into_iter().map(NodalVector::new).collect())
}

fn split_failure(r: Result<DiscreteSolution, CoreError>, out: &mut Outcome) -> Result<DiscreteSolution, RunError> {
    match r {
        Ok(s) => Ok(s),
        Err(CoreError::SolveFailure { step, reason, partial }) => {
            out.solve_failure = Some(format!("step {step}: {reason}"));
            Ok(*partial)
        }
        Err(e) => Err(core_error("problem", e)),
    }
}

fn oracle_errors(sol: &DiscreteSolution, oracle: &Option<ExactSolution>, out: &mut Outcome) -> Result<(), RunError> {
    if let Some(o) = oracle {
        let e = error_vs_oracle(sol, o).map_err(|e| core_error("experiment.oracle", e))?;
        out.put("oracle_error", to_value(&e));
    }
    Ok(())
}

fn run_solve(cfg: &RunConfig, out: &mut Outcome) -> Result<(), RunError> {
    let s = setup(cfg, out)?;
    let solve_cfg = cfg.solve_config();
    let result = out.time("solve", || solve(&s.spec, &s.grid, &s.mesh, &solve_cfg));
    let sol = split_failure(result, out)?;
    out.put("solve", record_summary(&sol));
    out.checks.push(residual_check(&sol));
    out.tables.push(solution_table(&sol));
    if out.solve_failure.is_some() {
        return Ok(());
    }
    let reports = out
        .time("estimate", || check_galerkin_estimate(&sol, &s.spec.boundary, &cfg.cutoffs()))
        .map_err(|e| core_error("experiment.cutoffs", e))?;
    out.checks.push(estimate_check(&reports));
    out.put("estimates", to_value(&reports));
    let trace = gronwall_trace(&sol).map_err(|e| core_error("problem", e))?;
    let mut table = Table::new("trace", TRACE_HEADER);
    table.rows = trace.points.iter().map(|(t, xi)| vec![fmt_float(*t), fmt_float(*xi)]).collect();
    out.tables.push(table);
    out.put("gronwall_c_emp", json!(trace.c_emp));
    oracle_errors(&sol, &s.oracle, out)
}

fn test_field(cfg: &RunConfig) -> TestField {
    if cfg.experiment.test_field.is_empty() {
        TestField::bubble(cfg.problem.a, cfg.problem.b)
    } else {
        TestField {
            coeffs: cfg.experiment.test_field.clone(),
            time: TimeFactor::Constant,
        }
    }
}

fn run_verify(cfg: &RunConfig, out: &mut Outcome) -> Result<(), RunError> {
    let s = setup(cfg, out)?;
    let solve_cfg = cfg.solve_config();
    let sol = match &cfg.experiment.solution_csv {
        Some(path) => {
            let states = read_solution_csv(Path::new(path), &s.grid, &s.mesh)?;
            out.time("reload", || {
                DiscreteSolution::from_states(s.spec.clone(), s.grid, s.mesh.clone(), solve_cfg, states)
            })
            .map_err(|e| core_error("experiment.solution_csv", e))?
        }
        None => {
            let result = out.time("solve", || solve(&s.spec, &s.grid, &s.mesh, &solve_cfg));
            split_failure(result, out)?
        }
    };
    out.put("solve", record_summary(&sol));
    let residuals = residual_check(&sol);
    let usable = residuals.pass;
    out.checks.push(residuals);
    if !usable {
        // The remaining checks assume every step converged.
        out.put("skipped", json!(["max_principle", "galerkin_estimate", "weak_form"]));
        return Ok(());
    }
    let principle =
        max_principle_check(&sol, &s.spec.boundary, ORDER_TOLERANCE).map_err(|e| core_error("problem", e))?;
    out.checks.push(Check::new("max_principle", principle.pass, principle.worst_violation));
    out.put("max_principle", to_value(&principle));
    let reports = out
        .time("estimate", || check_galerkin_estimate(&sol, &s.spec.boundary, &cfg.cutoffs()))
        .map_err(|e| core_error("experiment.cutoffs", e))?;
    out.checks.push(estimate_check(&reports));
    out.put("estimates", to_value(&reports));
    let zeta = test_field(cfg);
    let weak = weak_form_residual(&sol, &zeta, (0.0, cfg.problem.t_final))
        .map_err(|e| core_error("experiment.test_field", e))?;
    out.put("weak_form_residual", json!(weak));
    oracle_errors(&sol, &s.oracle, out)
}

fn run_squeeze(cfg: &RunConfig, out: &mut Outcome) -> Result<(), RunError> {
    let s = setup(cfg, out)?;
    let solve_cfg = cfg.solve_config();
    let report = out
        .time("squeeze", || {
            gamma_squeeze(&s.spec, &cfg.experiment.gammas, &s.grid, &s.mesh, &solve_cfg, ORDER_TOLERANCE)
        })
        .map_err(|e| core_error("experiment.gammas", e))?;
    if !report.complete {
        out.solve_failure = report.failure.clone();
    }
    let ordering = report
        .entries
        .iter()
        .map(|e| e.lower_margin.min(e.upper_margin))
        .fold(f64::INFINITY, f64::min);
    out.checks.push(Check::new(
        "ordering",
        report.complete && report.entries.iter().all(|e| e.ordered),
        if ordering.is_finite() { ordering } else { 0.0 },
    ));
    let shrink = report
        .entries
        .windows(2)
        .map(|w| (w[0].gap - w[1].gap) / w[0].gap.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    out.checks.push(Check::new(
        "gaps_decreasing",
        report.gaps_decreasing,
        if shrink.is_finite() { shrink } else { 0.0 },
    ));
    let mut table = Table::new("squeeze", SQUEEZE_HEADER);
    table.rows = report.entries.iter().map(|e| vec![fmt_float(e.gamma), fmt_float(e.gap)]).collect();
    out.tables.push(table);
    out.put("squeeze", to_value(&report));
    Ok(())
}

fn run_convergence(cfg: &RunConfig, out: &mut Outcome) -> Result<(), RunError> {
    let s = setup(cfg, out)?;
    let ladder = cfg.ladder()?;
    let solve_cfg = cfg.solve_config();
    let exact = s.oracle.clone();
    let oracle_fn = move |x: f64, t: f64| exact.as_ref().map_or(0.0, |o| o.value(x, t));
    let oracle: Option<&(dyn Fn(f64, f64) -> f64 + Sync)> = s.oracle.as_ref().map(|_| &oracle_fn as _);
    let report = out
        .time("refine", || refine_study(&s.spec, &ladder, &solve_cfg, oracle))
        .map_err(|e| core_error("experiment.ladder", e))?;
    if let Some((rung, reason)) = &report.failure {
        out.solve_failure = Some(format!("rung {rung}: {reason}"));
    }
    let drop = report
        .errors
        .windows(2)
        .map(|w| (w[0].lp_space_time - w[1].lp_space_time) / w[0].lp_space_time.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    out.checks.push(Check::new(
        "errors_decreasing",
        report.complete && report.strictly_decreasing(),
        if drop.is_finite() { drop } else { 0.0 },
    ));
    let mut table = Table::new("convergence", CONVERGENCE_HEADER);
    for (i, e) in report.errors.iter().enumerate() {
        let (mt, n) = report.ladder[i];
        let reduction = if i == 0 { String::new() } else { fmt_float(report.reductions[i - 1]) };
        table.rows.push(vec![mt.to_string(), n.to_string(), fmt_float(e.lp_space_time), reduction]);
    }
    out.tables.push(table);
    out.put("convergence", to_value(&report));
    Ok(())
}

/// `samples` pairs of equal random dimension in `1..=3`, components
/// uniform in `[−SAMPLE_RANGE, SAMPLE_RANGE]`.
pub fn sample_pairs(rng: &mut impl Rng, samples: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..samples)
        .map(|_| {
            let d = rng.gen_range(1..=3);
            let mut draw = || (0..d).map(|_| rng.gen_range(-SAMPLE_RANGE..=SAMPLE_RANGE)).collect::<Vec<f64>>();
            (draw(), draw())
        })
        .collect()
}

fn run_ineq(cfg: &RunConfig, out: &mut Outcome) -> Result<(), RunError> {
    let seed = cfg.experiment.seed.ok_or_else(|| ConfigError::Invalid {
        key: "experiment.seed".into(),
        message: "inequality sweeps need a fixed seed (config or --seed)".into(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summaries = Vec::new();
    for &q in &cfg.experiment.exponents {
        let p = trudinger::model::Exponent::new(q).map_err(|e| core_error("experiment.exponents", e))?;
        let pairs = sample_pairs(&mut rng, cfg.experiment.samples);
        let summary = out
            .time(&format!("sweep_p{q}"), || sweep_inequalities(p, &pairs, cfg.solver.execution))
            .map_err(|e| core_error("experiment.exponents", e))?;
        let slack = if summary.worst_slack.is_finite() { summary.worst_slack } else { 0.0 };
        out.checks.push(Check::new(&format!("inequalities_p{q}"), summary.violations == 0, slack));
        summaries.push(summary);
    }
    out.put("seed", json!(seed));
    out.put("sweeps", to_value(&summaries));
    Ok(())
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    match command {
        Command::Solve => run_solve(cfg, &mut out)?,
        Command::Verify => run_verify(cfg, &mut out)?,
        Command::Squeeze => run_squeeze(cfg, &mut out)?,
        Command::Convergence => run_convergence(cfg, &mut out)?,
        Command::Ineq => run_ineq(cfg, &mut out)?,
    }
    if let Some(f) = &out.solve_failure {
        out.put("solve_failure", json!(f));
    }
    Ok(out)
}

/// JSON report with top-level `command`, `config`, `results`, `checks`,
/// `timings`.
pub fn report_value(command: Command, cfg: &RunConfig, out: &Outcome) -> Value {
    json!({
        "command": command.name(),
        "config": to_value(cfg),
        "results": Value::Object(out.results.clone()),
        "checks": to_value(&out.checks),
        "timings": Value::Object(out.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect()),
    })
}

#[derive(Debug)]
pub struct RunSummary {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub message: Option<String>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<String>) -> std::io::Result<()> {
    std::fs::write(dir.join(name), bytes)?;
    files.push(name.to_string());
    Ok(())
}

/// Writes the manifest for whatever was emitted; always the last file.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    exit_code: i32,
    config: &str,
    timings: Vec<(String, f64)>,
    files: &[String],
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.into(),
        exit_code,
        config: config.into(),
        timings,
        files: RunManifest::inventory(dir, files)?,
    };
    std::fs::write(dir.join(MANIFEST_NAME), json_bytes(&to_value(&manifest)))
}

/// Runs `command`, writes reports per the output section and the manifest.
pub fn run(command: Command, cfg: &RunConfig) -> RunSummary {
    let dir = cfg.output_dir();
    let started = Instant::now();
    let (exit_code, message, outcome) = match execute(command, cfg) {
        Ok(out) => (out.exit_code(), out.solve_failure.clone(), Some(out)),
        Err(e) => (e.exit_code(), Some(e.to_string()), None),
    };
    let mut files = Vec::new();
    let mut timings = Vec::new();
    let written = (|| -> std::io::Result<()> {
        std::fs::create_dir_all(&dir)?;
        if let Some(out) = &outcome {
            if cfg.wants(OutputFormat::Csv) {
                for t in &out.tables {
                    write_file(&dir, &t.file_name(), &t.csv_bytes(), &mut files)?;
                }
            }
            if cfg.wants(OutputFormat::Json) {
                let report = report_value(command, cfg, out);
                write_file(&dir, &format!("{}.json", command.name()), &json_bytes(&report), &mut files)?;
            }
            timings = out.timings.clone();
        }
        timings.push(("total".into(), started.elapsed().as_secs_f64()));
        write_manifest(&dir, command.name(), exit_code, &crate::config::to_toml(cfg), timings.clone(), &files)
    })();
    match written {
        Ok(()) => RunSummary {
            exit_code,
            out_dir: dir,
            files,
            message,
        },
        Err(e) => RunSummary {
            exit_code: exit_code.max(EXIT_CHECK_FAILED),
            out_dir: dir,
            files,
            message: Some(format!("cannot write reports: {e}")),
        },
    }
}

//! Time march of the implicit scheme and refinement studies.

use serde::{Deserialize, Serialize};

use crate::discretization::{average_boundary, build_time_grid, AveragedBoundary, BoundaryExpr, TimeGrid};
use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{build_uniform_mesh, gauss_rule, Basis, Mesh, NodalVector, QuadratureRule};
use crate::model::Exponent;
use crate::stepper::{solve_step_from, step_residual, SolveConfig, StepProblem, StepResult};

/// The continuous problem: exponent, interval, horizon and data `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub exponent: Exponent,
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub boundary: BoundaryExpr,
}

impl ProblemSpec {
    pub fn new(exponent: Exponent, a: f64, b: f64, t_final: f64, boundary: BoundaryExpr) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid_argument(format!("invalid interval ({a}, {b})")));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid_argument(format!("invalid final time {t_final}")));
        }
        Ok(ProblemSpec {
            exponent,
            a,
            b,
            t_final,
            boundary,
        })
    }

    /// Same problem with `ψ + γ`.
    pub fn shifted(&self, gamma: f64) -> Self {
        ProblemSpec {
            boundary: self.boundary.shifted(gamma),
            ..self.clone()
        }
    }

    pub fn with_boundary(&self, boundary: BoundaryExpr) -> Self {
        ProblemSpec {
            boundary,
            ..self.clone()
        }
    }

    pub fn domain_length(&self) -> f64 {
        self.b - self.a
    }
}

/// Per-step solver metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub functional: f64,
    pub converged: bool,
}

impl From<&StepResult> for StepRecord {
    fn from(r: &StepResult) -> Self {
        StepRecord {
            iterations: r.iterations,
            residual: r.gradient_norm,
            tolerance: r.tolerance,
            functional: r.functional,
            converged: r.converged,
        }
    }
}

/// Nodal states `u_0, …, u_{m_t}`; `u_k` is held on the slab `((k−1)h, kh]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    spec: ProblemSpec,
    grid: TimeGrid,
    mesh: Mesh,
    config: SolveConfig,
    states: Vec<NodalVector>,
    records: Vec<StepRecord>,
}

impl DiscreteSolution {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    pub fn states(&self) -> &[NodalVector] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &NodalVector {
        &self.states[k]
    }

    pub fn final_state(&self) -> &NodalVector {
        self.states.last().expect("at least the initial state")
    }

    /// Metadata of steps `1..=len`; entry `k − 1` belongs to step `k`.
    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Number of completed steps (equals `m_t` for a full march).
    pub fn completed_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.completed_steps() == self.grid.steps()
    }

    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }

    pub fn basis(&self) -> Result<Basis> {
        Ok(Basis::new(self.mesh.clone(), gauss_rule(self.config.quadrature_order)?))
    }

    /// Rebuilds a solution from externally supplied states and recomputes
    /// every step's residual against its predecessor, so a tampered state
    /// shows up as an unconverged step.
    pub fn from_states(
        spec: ProblemSpec,
        grid: TimeGrid,
        mesh: Mesh,
        config: SolveConfig,
        states: Vec<NodalVector>,
    ) -> Result<Self> {
        config.validate()?;
        check_mesh(&spec, &mesh)?;
        check_grid(&spec, &grid)?;
        if states.len() != grid.steps() + 1 {
            return Err(Error::invalid_data(format!(
                "expected {} states, got {}",
                grid.steps() + 1,
                states.len()
            )));
        }
        if let Some(k) = states.iter().position(|s| s.len() != mesh.node_count()) {
            return Err(Error::invalid_data(format!("state {k} has wrong node count")));
        }
        if let Some(k) = states.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid_data(format!("state {k} has non-finite values")));
        }
        let quad = gauss_rule(config.quadrature_order)?;
        let basis = Basis::new(mesh.clone(), quad.clone());
        let lift = average_boundary(&spec.boundary, &grid, &mesh, &quad)?;
        let mut records = Vec::with_capacity(grid.steps());
        for k in 1..=grid.steps() {
            let sp = StepProblem::new(
                spec.exponent,
                &basis,
                grid.step(),
                &states[k - 1],
                lift.slice(k),
                config.mass,
            )?;
            let warm = if k == 1 {
                vec![0.0; basis.interior_count()]
            } else {
                StepProblem::new(spec.exponent, &basis, grid.step(), &states[k - 2], lift.slice(k - 1), config.mass)?
                    .coefficients_of(&states[k - 1])
            };
            let g0 = step_residual(&sp, &warm)?;
            let tolerance = config.gradient_tol * g0.max(1.0);
            let residual = step_residual(&sp, &sp.coefficients_of(&states[k]))?;
            let boundary_ok = {
                let n = mesh.node_count() - 1;
                states[k][0] == lift.slice(k)[0] && states[k][n] == lift.slice(k)[n]
            };
            records.push(StepRecord {
                iterations: 0,
                residual,
                tolerance,
                functional: f64::NAN,
                converged: residual <= tolerance && boundary_ok,
            });
        }
        Ok(DiscreteSolution {
            spec,
            grid,
            mesh,
            config,
            states,
            records,
        })
    }
}

fn check_mesh(spec: &ProblemSpec, mesh: &Mesh) -> Result<()> {
    if mesh.a() != spec.a || mesh.b() != spec.b {
        return Err(Error::invalid_argument(format!(
            "mesh spans [{}, {}] but the problem is posed on [{}, {}]",
            mesh.a(),
            mesh.b(),
            spec.a,
            spec.b
        )));
    }
    Ok(())
}

fn check_grid(spec: &ProblemSpec, grid: &TimeGrid) -> Result<()> {
    if (grid.t_final() - spec.t_final).abs() > 1e-12 * spec.t_final {
        return Err(Error::invalid_argument(format!(
            "time grid ends at {} but the problem ends at {}",
            grid.t_final(),
            spec.t_final
        )));
    }
    Ok(())
}

/// Marches `u_0 = ψ_h(·,0)` through every slab, minimizing one step
/// functional per slab and warm-starting from the previous coefficients.
pub fn solve(spec: &ProblemSpec, grid: &TimeGrid, mesh: &Mesh, cfg: &SolveConfig) -> Result<DiscreteSolution> {
    cfg.validate()?;
    check_mesh(spec, mesh)?;
    check_grid(spec, grid)?;
    let quad = gauss_rule(cfg.quadrature_order)?;
    let basis = Basis::new(mesh.clone(), quad.clone());
    let lift: AveragedBoundary = average_boundary(&spec.boundary, grid, mesh, &quad)?;

    let mut sol = DiscreteSolution {
        spec: spec.clone(),
        grid: *grid,
        mesh: mesh.clone(),
        config: *cfg,
        states: vec![lift.initial().clone()],
        records: Vec::with_capacity(grid.steps()),
    };
    let mut warm = vec![0.0; basis.interior_count()];
    for k in 1..=grid.steps() {
        let outcome = StepProblem::new(
            spec.exponent,
            &basis,
            grid.step(),
            &sol.states[k - 1],
            lift.slice(k),
            cfg.mass,
        )
        .map(|sp| sp.with_execution(cfg.execution, cfg.ordered_reduction))
        .and_then(|sp| {
            let r = solve_step_from(&sp, cfg, &warm)?;
            let u = sp.full_state(&r.alpha);
            Ok((r, u))
        });
        let (result, u) = match outcome {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::SolveFailure {
                    step: k,
                    reason: e.to_string(),
                    partial: Box::new(sol),
                })
            }
        };
        if !result.converged {
            return Err(Error::SolveFailure {
                step: k,
                reason: format!(
                    "no convergence after {} iterations (gradient {:.3e}, tolerance {:.3e})",
                    result.iterations, result.gradient_norm, result.tolerance
                ),
                partial: Box::new(sol),
            });
        }
        sol.records.push(StepRecord::from(&result));
        sol.states.push(u);
        warm = result.alpha;
    }
    Ok(sol)
}

/// Step index whose state is held at time `t`.
fn slab_of(grid: &TimeGrid, t: f64) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let mut k = ((t / grid.step()).ceil() as usize).clamp(1, grid.steps());
    if k > 1 && grid.time(k - 1) >= t {
        k -= 1;
    }
    k
}

/// `u_hm(x, t)`: linear in `x` on each element, constant in `t` on each slab.
pub fn evaluate(sol: &DiscreteSolution, x: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= sol.grid.t_final()) {
        return Err(Error::invalid_argument(format!(
            "time {t} outside [0, {}]",
            sol.grid.t_final()
        )));
    }
    let k = slab_of(&sol.grid, t);
    if k >= sol.states.len() {
        return Err(Error::invalid_argument(format!("time {t} lies beyond the computed steps")));
    }
    sol.mesh
        .interpolate(&sol.states[k], x)
        .ok_or_else(|| Error::invalid_argument(format!("point {x} outside the mesh")))
}

/// Error norms of a discrete solution against a reference field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    /// `‖u_hm − u‖` in `L^p(Ω × (0, T))`.
    pub lp_space_time: f64,
    /// Maximum over nodes and quadrature points at `t = T`.
    pub linf_final: f64,
}

/// Error against a closed-form field, by Gauss quadrature in `x` and `t`.
pub fn error_norms(sol: &DiscreteSolution, exact: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<ErrorNorms> {
    let quad = gauss_rule(sol.config.quadrature_order.max(4))?;
    let p = sol.spec.exponent.p();
    let mesh = &sol.mesh;
    let grid = &sol.grid;
    let h = grid.step();
    let ne = mesh.element_count();
    let slab_terms = exec::map_indices(sol.config.execution, grid.steps(), |j| {
        let k = j + 1;
        let u = &sol.states[k];
        let t0 = grid.time(k - 1);
        let mut acc = 0.0;
        for (st, wt) in quad.iter() {
            let t = t0 + st * h;
            for e in 0..ne {
                let (x0, len) = (mesh.nodes()[e], mesh.element_length(e));
                for (sx, wx) in quad.iter() {
                    let uh = (1.0 - sx) * u[e] + sx * u[e + 1];
                    acc += wt * h * wx * len * (uh - exact(x0 + sx * len, t)).abs().powf(p);
                }
            }
        }
        acc
    });
    let lp = slab_terms.iter().sum::<f64>().powf(1.0 / p);
    let linf = final_linf(sol.final_state(), mesh, &quad, |x| exact(x, grid.t_final()));
    if !(lp.is_finite() && linf.is_finite()) {
        return Err(Error::numeric(0, "non-finite error norm"));
    }
    Ok(ErrorNorms {
        lp_space_time: lp,
        linf_final: linf,
    })
}

fn final_linf(u: &[f64], mesh: &Mesh, quad: &QuadratureRule, f: impl Fn(f64) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, x) in mesh.nodes().iter().enumerate() {
        worst = worst.max((u[i] - f(*x)).abs());
    }
    for e in 0..mesh.element_count() {
        let (x0, len) = (mesh.nodes()[e], mesh.element_length(e));
        for &s in quad.points() {
            let uh = (1.0 - s) * u[e] + s * u[e + 1];
            worst = worst.max((uh - f(x0 + s * len)).abs());
        }
    }
    worst
}

/// Error of `coarse` measured against `fine`, integrated on the fine grid.
pub fn error_between(coarse: &DiscreteSolution, fine: &DiscreteSolution) -> Result<ErrorNorms> {
    if coarse.mesh.a() != fine.mesh.a() || coarse.mesh.b() != fine.mesh.b() || coarse.grid.t_final() != fine.grid.t_final() {
        return Err(Error::invalid_argument("solutions live on different domains"));
    }
    let mut norms = error_norms(fine, &|x, t| evaluate(coarse, x, t).unwrap_or(f64::NAN))?;
    // Final-time comparison is symmetric: sample both at the fine points.
    let quad = gauss_rule(fine.config.quadrature_order.max(4))?;
    norms.linf_final = final_linf(fine.final_state(), &fine.mesh, &quad, |x| {
        coarse.mesh.interpolate(coarse.final_state(), x).unwrap_or(f64::NAN)
    });
    Ok(norms)
}

/// `‖u_a − u_b‖` in `L^p(Ω × (0, T))` for two solutions on the same mesh and grid.
pub fn lp_distance(sol_a: &DiscreteSolution, sol_b: &DiscreteSolution) -> Result<f64> {
    if sol_a.mesh != sol_b.mesh || sol_a.grid != sol_b.grid {
        return Err(Error::invalid_argument("solutions use different meshes or time grids"));
    }
    let steps = sol_a.completed_steps().min(sol_b.completed_steps());
    let quad = gauss_rule(sol_a.config.quadrature_order.max(4))?;
    let p = sol_a.spec.exponent.p();
    let mesh = &sol_a.mesh;
    let terms = exec::map_indices(sol_a.config.execution, steps, |j| {
        let (ua, ub) = (&sol_a.states[j + 1], &sol_b.states[j + 1]);
        let mut acc = 0.0;
        for e in 0..mesh.element_count() {
            let (d0, d1) = (ua[e] - ub[e], ua[e + 1] - ub[e + 1]);
            acc += quad.integrate(0.0, mesh.element_length(e), |s| {
                let r = s / mesh.element_length(e);
                ((1.0 - r) * d0 + r * d1).abs().powf(p)
            });
        }
        acc * sol_a.grid.step()
    });
    Ok(terms.iter().sum::<f64>().powf(1.0 / p))
}

/// How each rung's error was measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorReference {
    Oracle,
    NextFinerRung,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(m_t, n_elements)` per rung.
    pub ladder: Vec<(usize, usize)>,
    pub reference: ErrorReference,
    /// One entry per measured rung (all rungs with an oracle, all but the
    /// last without).
    pub errors: Vec<ErrorNorms>,
    /// `errors[i].lp / errors[i+1].lp`.
    pub reductions: Vec<f64>,
    pub complete: bool,
    /// First rung whose solve failed, with the reason.
    pub failure: Option<(usize, String)>,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1].lp_space_time < w[0].lp_space_time)
    }

    pub fn min_reduction(&self) -> f64 {
        self.reductions.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn validate_ladder(ladder: &[(usize, usize)]) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::invalid_argument("refinement ladder needs at least two rungs"));
    }
    for (i, w) in ladder.windows(2).enumerate() {
        let ((m0, n0), (m1, n1)) = (w[0], w[1]);
        if m1 < m0 || n1 < n0 || (m1 == m0 && n1 == n0) {
            return Err(Error::invalid_argument(format!(
                "rung {} ({m1}, {n1}) does not refine rung {i} ({m0}, {n0})",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Solves every rung (concurrently under parallel execution) and measures
/// the error of each against `oracle`, or against the next finer rung.
pub fn refine_study(
    spec: &ProblemSpec,
    ladder: &[(usize, usize)],
    cfg: &SolveConfig,
    oracle: Option<&(dyn Fn(f64, f64) -> f64 + Sync)>,
) -> Result<ConvergenceReport> {
    validate_ladder(ladder)?;
    let runs = exec::map_slice(cfg.execution, ladder, |&(mt, n)| -> Result<DiscreteSolution> {
        let grid = build_time_grid(spec.t_final, mt)?;
        let mesh = build_uniform_mesh(n, spec.a, spec.b)?;
        solve(spec, &grid, &mesh, cfg)
    });
    let mut sols = Vec::new();
    let mut failure = None;
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(s) => sols.push(s),
            Err(e @ (Error::InvalidArgument(_) | Error::InvalidData(_))) => return Err(e),
            Err(e) => {
                failure = Some((i, e.to_string()));
                break;
            }
        }
    }
    let (reference, errors) = match oracle {
        Some(f) => (
            ErrorReference::Oracle,
            exec::map_slice(cfg.execution, &sols, |s| error_norms(s, f))
                .into_iter()
                .collect::<Result<Vec<_>>>()?,
        ),
        None => {
            let pairs: Vec<usize> = (0..sols.len().saturating_sub(1)).collect();
            (
                ErrorReference::NextFinerRung,
                exec::map_slice(cfg.execution, &pairs, |&i| error_between(&sols[i], &sols[i + 1]))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    let reductions = errors
        .windows(2)
        .map(|w| w[0].lp_space_time / w[1].lp_space_time)
        .collect();
    Ok(ConvergenceReport {
        ladder: ladder.to_vec(),
        reference,
        errors,
        reductions,
        complete: failure.is_none(),
        failure,
    })
}

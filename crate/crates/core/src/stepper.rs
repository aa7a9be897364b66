//! One implicit time step as a convex minimization over the interior
//! coefficients.
//!
//! With `u = ψ_h + Σ w_j e_j` the step functional is
//!
//! ```text
//! F(w) = (1/p) ∫ |u'|^p + (1/h) ∫ ( |u|^p / p − |u_prev|^{p−2} u_prev · u )
//! ```
//!
//! and its Euler–Lagrange equation tested against each hat `e_j` is the
//! discrete scheme. The time term is evaluated either with the lumped
//! (nodal) mass or with the consistent Gauss quadrature mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::{Basis, NodalVector};
use crate::model::{power, Exponent};

/// Element count above which element loops are handed to the thread pool.
pub const PARALLEL_ELEMENT_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassTreatment {
    #[default]
    Lumped,
    Consistent,
}

/// Newton and discretization settings shared by every step of a march.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Gradient tolerance, multiplied by `max(1, ‖g₀‖∞)` of the warm start.
    pub gradient_tol: f64,
    pub max_iterations: usize,
    /// Initial Hessian regularization relative to the mean of `|u'|²`.
    pub reg_initial: f64,
    pub reg_floor: f64,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
    pub quadrature_order: usize,
    pub mass: MassTreatment,
    pub execution: Execution,
    /// Sum parallel element contributions in element order.
    pub ordered_reduction: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            gradient_tol: 1e-10,
            max_iterations: 100,
            reg_initial: 1e-6,
            reg_floor: 1e-14,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            quadrature_order: 4,
            mass: MassTreatment::Lumped,
            execution: Execution::Parallel,
            ordered_reduction: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid_argument(format!("solver config: {what}")));
        if !(self.gradient_tol > 0.0 && self.gradient_tol.is_finite()) {
            return bad("gradient_tol must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.reg_initial >= 0.0 && self.reg_floor > 0.0) {
            return bad("regularization must be non-negative with a positive floor");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 0.5) {
            return bad("sufficient_decrease must lie in (0, 0.5)");
        }
        if !(1..=crate::geometry::MAX_GAUSS_ORDER).contains(&self.quadrature_order) {
            return bad("quadrature_order out of range");
        }
        Ok(())
    }
}

/// Data of one step: previous state, boundary lift and discretization.
#[derive(Debug, Clone)]
pub struct StepProblem<'a> {
    exponent: Exponent,
    basis: &'a Basis,
    step: f64,
    u_prev: &'a [f64],
    boundary: &'a [f64],
    mass: MassTreatment,
    execution: Execution,
    ordered: bool,
    /// `|u_prev|^{p-2} u_prev` at the nodes.
    prev_power: Vec<f64>,
    /// Same at each quadrature point, element-major (consistent mass only).
    prev_power_quad: Vec<f64>,
}

impl<'a> StepProblem<'a> {
    pub fn new(
        exponent: Exponent,
        basis: &'a Basis,
        step: f64,
        u_prev: &'a [f64],
        boundary: &'a [f64],
        mass: MassTreatment,
    ) -> Result<Self> {
        let n = basis.mesh().node_count();
        if u_prev.len() != n || boundary.len() != n {
            return Err(Error::invalid_argument(format!(
                "state lengths must equal node count {n} (u_prev {}, boundary {})",
                u_prev.len(),
                boundary.len()
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid_argument("time step must be positive"));
        }
        let prev_power = u_prev.iter().map(|&v| power(exponent, v)).collect();
        let prev_power_quad = match mass {
            MassTreatment::Lumped => Vec::new(),
            MassTreatment::Consistent => {
                let nq = basis.quadrature().order();
                let mut out = Vec::with_capacity(basis.mesh().element_count() * nq);
                for e in 0..basis.mesh().element_count() {
                    for q in 0..nq {
                        let [l, r] = basis.shape(q);
                        out.push(power(exponent, l * u_prev[e] + r * u_prev[e + 1]));
                    }
                }
                out
            }
        };
        Ok(StepProblem {
            exponent,
            basis,
            step,
            u_prev,
            boundary,
            mass,
            execution: Execution::Sequential,
            ordered: true,
            prev_power,
            prev_power_quad,
        })
    }

    pub fn with_execution(mut self, execution: Execution, ordered: bool) -> Self {
        self.execution = execution;
        self.ordered = ordered;
        self
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    pub fn basis(&self) -> &Basis {
        self.basis
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn u_prev(&self) -> &[f64] {
        self.u_prev
    }

    pub fn boundary(&self) -> &[f64] {
        self.boundary
    }

    pub fn mass(&self) -> MassTreatment {
        self.mass
    }

    pub fn interior_count(&self) -> usize {
        self.basis.interior_count()
    }

    /// Nodal values of `ψ_h + Σ w_j e_j`.
    pub fn full_state(&self, w: &[f64]) -> NodalVector {
        let mut u = self.boundary.to_vec();
        for (j, wj) in w.iter().enumerate() {
            u[j + 1] += wj;
        }
        u.into()
    }

    /// Interior coefficients of a full nodal state.
    pub fn coefficients_of(&self, u: &[f64]) -> Vec<f64> {
        (1..u.len() - 1).map(|i| u[i] - self.boundary[i]).collect()
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.interior_count() {
            return Err(Error::invalid_argument(format!(
                "coefficient vector has length {}, expected {}",
                w.len(),
                self.interior_count()
            )));
        }
        Ok(())
    }

    fn elementwise<T: Send>(&self, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        let ne = self.basis.mesh().element_count();
        let exec = if ne >= PARALLEL_ELEMENT_THRESHOLD {
            self.execution
        } else {
            Execution::Sequential
        };
        exec::map_indices(exec, ne, f)
    }

    fn element_energy(&self, u: &[f64], e: usize) -> f64 {
        let p = self.exponent.p();
        let len = self.basis.mesh().element_length(e);
        let s = self.basis.element_slope(u, e);
        let stiff = len * s.abs().powf(p) / p;
        let mass = match self.mass {
            MassTreatment::Lumped => {
                let g = |i: usize| u[i].abs().powf(p) / p - self.prev_power[i] * u[i];
                0.5 * len * (g(e) + g(e + 1))
            }
            MassTreatment::Consistent => {
                let nq = self.basis.quadrature().order();
                let mut acc = 0.0;
                for (q, (_, w)) in self.basis.quadrature().iter().enumerate() {
                    let [l, r] = self.basis.shape(q);
                    let v = l * u[e] + r * u[e + 1];
                    acc += w * (v.abs().powf(p) / p - self.prev_power_quad[e * nq + q] * v);
                }
                acc * len
            }
        };
        stiff + mass / self.step
    }

    /// Local residual `[r_left, r_right]` of element `e`.
    fn element_residual(&self, u: &[f64], e: usize) -> [f64; 2] {
        let p = self.exponent;
        let flux = power(p, self.basis.element_slope(u, e));
        let len = self.basis.mesh().element_length(e);
        let mut r = [-flux, flux];
        match self.mass {
            MassTreatment::Lumped => {
                for (k, i) in [e, e + 1].into_iter().enumerate() {
                    r[k] += 0.5 * len * (power(p, u[i]) - self.prev_power[i]) / self.step;
                }
            }
            MassTreatment::Consistent => {
                let nq = self.basis.quadrature().order();
                let mut m = [0.0; 2];
                for (q, (_, w)) in self.basis.quadrature().iter().enumerate() {
                    let [l, rr] = self.basis.shape(q);
                    let v = l * u[e] + rr * u[e + 1];
                    let d = power(p, v) - self.prev_power_quad[e * nq + q];
                    m[0] += w * d * l;
                    m[1] += w * d * rr;
                }
                r[0] += m[0] * len / self.step;
                r[1] += m[1] * len / self.step;
            }
        }
        r
    }

    /// Local regularized Hessian `[a_ll, a_lr, a_rr]` of element `e`.
    fn element_hessian(&self, u: &[f64], e: usize, eps: f64) -> [f64; 3] {
        let p = self.exponent.p();
        let len = self.basis.mesh().element_length(e);
        let s = self.basis.element_slope(u, e);
        let k = (p - 1.0) * (s * s + eps).powf(0.5 * (p - 2.0)) / len;
        let mut a = [k, -k, k];
        let weight = |v: f64| (p - 1.0) * (v * v + eps).powf(0.5 * (p - 2.0));
        match self.mass {
            MassTreatment::Lumped => {
                a[0] += 0.5 * len * weight(u[e]) / self.step;
                a[2] += 0.5 * len * weight(u[e + 1]) / self.step;
            }
            MassTreatment::Consistent => {
                let mut m = [0.0; 3];
                for (q, (_, w)) in self.basis.quadrature().iter().enumerate() {
                    let [l, r] = self.basis.shape(q);
                    let c = w * weight(l * u[e] + r * u[e + 1]);
                    m[0] += c * l * l;
                    m[1] += c * l * r;
                    m[2] += c * r * r;
                }
                for (ai, mi) in a.iter_mut().zip(m) {
                    *ai += mi * len / self.step;
                }
            }
        }
        a
    }

    /// Regularized Newton matrix on the interior nodes as `(diag, off)`.
    fn hessian(&self, w: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
        let u = self.full_state(w);
        let locals = self.elementwise(|e| self.element_hessian(&u, e, eps));
        let n = u.len();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for (e, a) in locals.iter().enumerate() {
            diag[e] += a[0];
            off[e] += a[1];
            diag[e + 1] += a[2];
        }
        // interior block: nodes 1..n-1, couplings between consecutive interior nodes
        (diag[1..n - 1].to_vec(), off[1..n - 2].to_vec())
    }

    fn mean_slope_squared(&self, w: &[f64]) -> f64 {
        let u = self.full_state(w);
        let ne = self.basis.mesh().element_count();
        (0..ne)
            .map(|e| self.basis.element_slope(&u, e).powi(2))
            .sum::<f64>()
            / ne as f64
    }
}

/// Value of the step functional at interior coefficients `w`.
pub fn functional_value(sp: &StepProblem<'_>, w: &[f64]) -> Result<f64> {
    sp.check_len(w)?;
    let u = sp.full_state(w);
    let terms = sp.elementwise(|e| sp.element_energy(&u, e));
    if let Some(e) = terms.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(e, "non-finite functional contribution"));
    }
    if sp.ordered {
        Ok(terms.iter().sum())
    } else {
        Ok(exec::sum_indices(sp.execution, terms.len(), false, |e| terms[e]))
    }
}

/// Derivative of [`functional_value`] along each trial function.
pub fn functional_gradient(sp: &StepProblem<'_>, w: &[f64]) -> Result<Vec<f64>> {
    sp.check_len(w)?;
    let u = sp.full_state(w);
    let locals = sp.elementwise(|e| sp.element_residual(&u, e));
    let mut r = vec![0.0; u.len()];
    for (e, loc) in locals.iter().enumerate() {
        if !(loc[0].is_finite() && loc[1].is_finite()) {
            return Err(Error::numeric(e, "non-finite residual contribution"));
        }
        r[e] += loc[0];
        r[e + 1] += loc[1];
    }
    Ok(r[1..u.len() - 1].to_vec())
}

/// Largest weak-form defect over the trial functions; identical to the
/// max-norm of the functional gradient.
pub fn step_residual(sp: &StepProblem<'_>, alpha: &[f64]) -> Result<f64> {
    Ok(max_norm(&functional_gradient(sp, alpha)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    /// Interior coefficients, constant on the slab.
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Absolute tolerance the gradient norm was held to.
    pub tolerance: f64,
    pub functional: f64,
    pub converged: bool,
    /// Functional value after each accepted iterate, starting at the warm start.
    pub history: Vec<f64>,
}

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `A x = rhs` for a symmetric tridiagonal `A` by elimination
/// without pivoting; fails on a non-positive pivot.
pub(crate) fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    for i in 0..n {
        if i > 0 {
            piv = diag[i] - off[i - 1] * c[i - 1];
        }
        if !(piv > 0.0 && piv.is_finite()) {
            return Err(Error::numeric(i, "singular regularized Hessian"));
        }
        if i + 1 < n {
            c[i] = off[i] / piv;
        }
        d[i] = if i == 0 {
            rhs[0] / piv
        } else {
            (rhs[i] - off[i - 1] * d[i - 1]) / piv
        };
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Minimizes the step functional from `w = 0`.
pub fn solve_step(sp: &StepProblem<'_>, cfg: &SolveConfig) -> Result<StepResult> {
    solve_step_from(sp, cfg, &vec![0.0; sp.interior_count()])
}

/// Damped Newton from a warm start.
///
/// The Newton matrix uses `(s² + ε)^{(p−2)/2}` in place of `|s|^{p−2}`
/// (and likewise in the mass term) so it stays positive definite where the
/// slope or the state vanishes; the objective and gradient are exact. `ε`
/// drops tenfold after every full Newton step, down to `reg_floor`.
pub fn solve_step_from(sp: &StepProblem<'_>, cfg: &SolveConfig, warm: &[f64]) -> Result<StepResult> {
    cfg.validate()?;
    sp.check_len(warm)?;
    let mut w = warm.to_vec();
    let mut f = functional_value(sp, &w)?;
    let mut g = functional_gradient(sp, &w)?;
    let mut gnorm = max_norm(&g);
    let tolerance = cfg.gradient_tol * gnorm.max(1.0);
    let mut eps = (cfg.reg_initial * sp.mean_slope_squared(&w)).max(cfg.reg_floor);
    let mut history = vec![f];
    let mut iterations = 0;

    while gnorm > tolerance && iterations < cfg.max_iterations {
        iterations += 1;
        let (diag, off) = sp.hessian(&w, eps);
        let neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut dir = solve_spd_tridiagonal(&diag, &off, &neg_g)?;
        let mut slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            dir = neg_g;
            slope = -g.iter().map(|x| x * x).sum::<f64>();
        }

        // Once the predicted decrease is below the rounding level of F the
        // Armijo test is noise; accept on a shrinking gradient instead.
        let round = 16.0 * f64::EPSILON * f.abs().max(f64::MIN_POSITIVE);
        let noisy = cfg.sufficient_decrease * slope.abs() <= round;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
            let ft = functional_value(sp, &trial)?;
            if noisy {
                if ft <= f + round {
                    let gt = functional_gradient(sp, &trial)?;
                    if max_norm(&gt) < gnorm {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            } else if ft <= f + cfg.sufficient_decrease * alpha * slope {
                let gt = functional_gradient(sp, &trial)?;
                accepted = Some((trial, ft, gt));
                break;
            }
            alpha *= cfg.backtrack_factor;
        }
        let Some((trial, ft, gt)) = accepted else {
            break;
        };
        if alpha == 1.0 {
            eps = (eps / 10.0).max(cfg.reg_floor);
        }
        w = trial;
        f = ft;
        g = gt;
        gnorm = max_norm(&g);
        history.push(f);
    }

    Ok(StepResult {
        alpha: w,
        iterations,
        gradient_norm: gnorm,
        tolerance,
        functional: f,
        converged: gnorm <= tolerance,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_uniform_mesh, gauss_rule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(n: usize) -> Basis {
        Basis::new(build_uniform_mesh(n, 0.0, 1.0).unwrap(), gauss_rule(4).unwrap())
    }

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    #[test]
    fn functional_closed_forms() {
        let b = basis(8);
        let c: f64 = 1.7;
        let h = 0.05;
        let prev = vec![c; 9];
        let bnd = vec![c; 9];
        for mass in [MassTreatment::Lumped, MassTreatment::Consistent] {
            let sp = StepProblem::new(p(3.0), &b, h, &prev, &bnd, mass).unwrap();
            let f = functional_value(&sp, &[0.0; 7]).unwrap();
            let want = -(c.powi(3) / h) * (1.0 - 1.0 / 3.0);
            assert!((f - want).abs() < 1e-12 * want.abs(), "{mass:?}: {f} vs {want}");
            let g = functional_gradient(&sp, &[0.0; 7]).unwrap();
            assert!(max_norm(&g) < 1e-12);
            assert!(step_residual(&sp, &[0.0; 7]).unwrap() < 1e-14 * (c * c / h));
        }
        let zero = vec![0.0; 9];
        let sp = StepProblem::new(p(3.0), &b, h, &zero, &zero, MassTreatment::Lumped).unwrap();
        assert_eq!(functional_value(&sp, &[0.0; 7]).unwrap(), 0.0);
    }

    #[test]
    fn functional_rejects_wrong_lengths() {
        let b = basis(4);
        let v = vec![0.0; 5];
        let sp = StepProblem::new(p(3.0), &b, 0.1, &v, &v, MassTreatment::Lumped).unwrap();
        assert!(functional_value(&sp, &[0.0; 2]).is_err());
        assert!(StepProblem::new(p(3.0), &b, 0.1, &v[..4], &v, MassTreatment::Lumped).is_err());
        assert!(StepProblem::new(p(3.0), &b, 0.0, &v, &v, MassTreatment::Lumped).is_err());
    }

    #[test]
    fn functional_is_coercive_with_p_growth() {
        let b = basis(10);
        let prev: Vec<f64> = b.mesh().nodes().iter().map(|x| x * (1.0 - x)).collect();
        let bnd = vec![0.0; 11];
        let sp = StepProblem::new(p(3.0), &b, 0.1, &prev, &bnd, MassTreatment::Lumped).unwrap();
        let w: Vec<f64> = (0..9).map(|j| ((j * 7 % 5) as f64 - 2.0) * 0.3).collect();
        // Leading term: F(sw) ~ s^p F_top(w) with F_top the p-homogeneous part.
        let top = |s: f64| {
            let ws: Vec<f64> = w.iter().map(|x| s * x).collect();
            let u = sp.full_state(&ws);
            let pe = 3.0;
            b.gradient_lp_norm_pow(&u, pe) / pe
                + b.lumped_mass().iter().zip(u.iter()).map(|(m, v)| m * v.abs().powf(pe)).sum::<f64>()
                    / (pe * 0.1)
        };
        let mut prev_ratio = f64::INFINITY;
        for s in [1.0, 2.0, 4.0, 64.0] {
            let ws: Vec<f64> = w.iter().map(|x| s * x).collect();
            let ratio = functional_value(&sp, &ws).unwrap() / top(s);
            let dev = (ratio - 1.0).abs();
            assert!(dev < prev_ratio, "deviation must shrink as s grows");
            prev_ratio = dev;
        }
        assert!(prev_ratio < 1e-3);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = basis(12);
        for mass in [MassTreatment::Lumped, MassTreatment::Consistent] {
            let prev: Vec<f64> = (0..13).map(|_| rng.gen_range(-1.0..1.5)).collect();
            let bnd: Vec<f64> = (0..13).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let sp = StepProblem::new(p(3.5), &b, 0.02, &prev, &bnd, mass).unwrap();
            let w: Vec<f64> = (0..11).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = functional_gradient(&sp, &w).unwrap();
            let eps = 1e-6;
            for j in 0..11 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += eps;
                wm[j] -= eps;
                let fd = (functional_value(&sp, &wp).unwrap() - functional_value(&sp, &wm).unwrap())
                    / (2.0 * eps);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "{mass:?} j={j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn constant_data_needs_no_iterations() {
        let b = basis(16);
        let c = vec![0.8; 17];
        let sp = StepProblem::new(p(3.0), &b, 0.01, &c, &c, MassTreatment::Lumped).unwrap();
        let r = solve_step(&sp, &SolveConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 1);
        assert!(r.alpha.iter().all(|&a| a.abs() < 1e-14));
    }

    /// Independent oracle: (M + hK) u = M u_prev with Dirichlet rows, solved
    /// by a dense Gaussian elimination written here.
    fn linear_implicit_euler(b: &Basis, h: f64, prev: &[f64], bnd: &[f64], lumped: bool) -> Vec<f64> {
        let n = prev.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut m = vec![vec![0.0; n]; n];
        for e in 0..n - 1 {
            let len = b.mesh().element_length(e);
            let ke = [[1.0 / len, -1.0 / len], [-1.0 / len, 1.0 / len]];
            let me = if lumped {
                [[len / 2.0, 0.0], [0.0, len / 2.0]]
            } else {
                [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]]
            };
            for r in 0..2 {
                for c in 0..2 {
                    a[e + r][e + c] += me[r][c] + h * ke[r][c];
                    m[e + r][e + c] += me[r][c];
                }
            }
        }
        let mut rhs: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * prev[j]).sum()).collect();
        for i in [0, n - 1] {
            a[i] = vec![0.0; n];
            a[i][i] = 1.0;
            rhs[i] = bnd[i];
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            a.swap(col, piv);
            rhs.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (rhs[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn p2_limit_step_matches_linear_implicit_euler() {
        let b = basis(20);
        let prev: Vec<f64> = b
            .mesh()
            .nodes()
            .iter()
            .map(|x| (std::f64::consts::PI * x).sin() + 0.3 * x)
            .collect();
        let mut bnd = vec![0.0; 21];
        bnd[20] = 0.35;
        for (mass, lumped) in [(MassTreatment::Lumped, true), (MassTreatment::Consistent, false)] {
            let sp = StepProblem::new(Exponent::p2_limit(), &b, 0.01, &prev, &bnd, mass).unwrap();
            let r = solve_step(&sp, &SolveConfig::default()).unwrap();
            assert!(r.converged);
            let u = sp.full_state(&r.alpha);
            let want = linear_implicit_euler(&b, 0.01, &prev, &bnd, lumped);
            for (x, y) in u.iter().zip(&want) {
                assert!((x - y).abs() < 1e-8, "{mass:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn minimizer_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = basis(24);
        let prev: Vec<f64> = b
            .mesh()
            .nodes()
            .iter()
            .map(|x| 0.2 + (2.0 * x).sin() * x * (1.3 - x))
            .collect();
        let bnd: Vec<f64> = b.mesh().nodes().iter().map(|x| 0.2 + 0.1 * x).collect();
        let sp = StepProblem::new(p(3.0), &b, 0.01, &prev, &bnd, MassTreatment::Lumped).unwrap();
        let r = solve_step(&sp, &SolveConfig::default()).unwrap();
        assert!(r.converged);
        let f0 = functional_value(&sp, &r.alpha).unwrap();
        for _ in 0..100 {
            let dir: Vec<f64> = (0..23).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let probe: Vec<f64> = r.alpha.iter().zip(&dir).map(|(a, d)| a + 1e-3 * d / nrm).collect();
            assert!(functional_value(&sp, &probe).unwrap() > f0);
        }
        // perturbing one coefficient strictly raises the residual
        let base = step_residual(&sp, &r.alpha).unwrap();
        assert!(base <= r.tolerance);
        let mut bumped = r.alpha.clone();
        bumped[5] += 0.1;
        assert!(step_residual(&sp, &bumped).unwrap() > base);
    }

    #[test]
    fn newton_history_is_non_increasing() {
        let b = basis(32);
        let prev: Vec<f64> = b.mesh().nodes().iter().map(|x| (3.0 * x).sin().abs()).collect();
        let bnd = vec![0.0; 33];
        let sp = StepProblem::new(p(4.0), &b, 0.05, &prev, &bnd, MassTreatment::Lumped).unwrap();
        let r = solve_step(&sp, &SolveConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-14 * w[0].abs());
        }
        assert!(r.functional <= r.history[0] + 1e-14 * r.history[0].abs());
    }

    #[test]
    fn lumped_step_preserves_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = basis(16);
        let cfg = SolveConfig::default();
        for _ in 0..20 {
            let lo_prev: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hi_prev: Vec<f64> = lo_prev.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
            let lo_bnd: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hi_bnd: Vec<f64> = lo_bnd.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
            let lo = StepProblem::new(p(3.0), &b, 0.01, &lo_prev, &lo_bnd, MassTreatment::Lumped).unwrap();
            let hi = StepProblem::new(p(3.0), &b, 0.01, &hi_prev, &hi_bnd, MassTreatment::Lumped).unwrap();
            let ulo = lo.full_state(&solve_step(&lo, &cfg).unwrap().alpha);
            let uhi = hi.full_state(&solve_step(&hi, &cfg).unwrap().alpha);
            for (a, c) in ulo.iter().zip(uhi.iter()) {
                assert!(*a <= c + 1e-10);
            }
        }
    }

    #[test]
    fn constant_state_shifts_with_gamma() {
        let b = basis(10);
        let cfg = SolveConfig::default();
        let base = vec![0.4; 11];
        let gamma = 0.25;
        let shifted = vec![0.4 + gamma; 11];
        let s0 = StepProblem::new(p(3.0), &b, 0.02, &base, &base, MassTreatment::Lumped).unwrap();
        let s1 = StepProblem::new(p(3.0), &b, 0.02, &shifted, &shifted, MassTreatment::Lumped).unwrap();
        let u0 = s0.full_state(&solve_step(&s0, &cfg).unwrap().alpha);
        let u1 = s1.full_state(&solve_step(&s1, &cfg).unwrap().alpha);
        for (a, c) in u0.iter().zip(u1.iter()) {
            assert!((c - a - gamma).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_equals_gradient_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = basis(9);
        for _ in 0..50 {
            let prev: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let bnd: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sp = StepProblem::new(p(2.7), &b, 0.1, &prev, &bnd, MassTreatment::Lumped).unwrap();
            let r = step_residual(&sp, &w).unwrap();
            let g = max_norm(&functional_gradient(&sp, &w).unwrap());
            assert!((r - g).abs() <= 1e-14 * g.max(1.0));
        }
    }

    #[test]
    fn tridiagonal_solver_detects_singularity() {
        assert!(solve_spd_tridiagonal(&[1.0, 0.0], &[0.0], &[1.0, 1.0]).is_err());
        let x = solve_spd_tridiagonal(&[2.0, 2.0, 2.0], &[-1.0, -1.0], &[1.0, 0.0, 1.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn parallel_assembly_is_bitwise_identical() {
        let n = 2 * PARALLEL_ELEMENT_THRESHOLD;
        let b = basis(n);
        let prev: Vec<f64> = b.mesh().nodes().iter().map(|x| (5.0 * x).sin()).collect();
        let bnd = vec![0.0; n + 1];
        let w: Vec<f64> = (1..n).map(|i| 0.01 * ((i % 17) as f64)).collect();
        let seq = StepProblem::new(p(3.0), &b, 0.01, &prev, &bnd, MassTreatment::Lumped).unwrap();
        let par = seq.clone().with_execution(Execution::Parallel, true);
        assert_eq!(
            functional_value(&seq, &w).unwrap().to_bits(),
            functional_value(&par, &w).unwrap().to_bits()
        );
        assert_eq!(functional_gradient(&seq, &w).unwrap(), functional_gradient(&par, &w).unwrap());
    }
}

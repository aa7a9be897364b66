//! Energy ledger of a discrete solution, the boundary-data majorant it is
//! compared with, the Grönwall trace and the slab-average contraction check.

use serde::{Deserialize, Serialize};

use crate::discretization::{time_average, BoundaryExpr, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{gauss_rule, Basis, Mesh, QuadratureRule};
use crate::model::{half_power_map, power, Exponent};
use crate::solver::DiscreteSolution;

/// Gauss order used for majorant integrals in space and time.
const MAJORANT_ORDER: usize = 8;

/// Left-hand side terms of the energy estimate up to `t_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub t_star_requested: f64,
    /// Cutoff snapped down to a step boundary.
    pub t_star: f64,
    pub steps: usize,
    /// `Σ h Σ m_i |(H(u_k) − H(u_{k−1}))/h|²` with `H(u) = |u|^{(p−2)/2} u`.
    pub term_a: f64,
    /// `Σ h ∫ |u_k'|^p`.
    pub term_b: f64,
    /// `Σ h ∫ |u_k|^p`.
    pub term_c: f64,
    /// `∫ |u_K'|^p` at the cutoff.
    pub term_d: f64,
}

impl EnergyLedger {
    pub fn lhs(&self) -> f64 {
        self.term_a + self.term_b + self.term_c + self.term_d
    }
}

/// Time-window sums `(term_a, term_b, term_c)` over steps `k0+1..=k1`.
pub fn window_terms(sol: &DiscreteSolution, k0: usize, k1: usize) -> Result<(f64, f64, f64)> {
    if k0 > k1 || k1 > sol.completed_steps() {
        return Err(Error::invalid_argument(format!("bad step window ({k0}, {k1})")));
    }
    let basis = sol.basis()?;
    let p = sol.spec().exponent;
    let h = sol.grid().step();
    let m = basis.lumped_mass();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for k in k0 + 1..=k1 {
        let (prev, cur) = (sol.state(k - 1), sol.state(k));
        a += h * m
            .iter()
            .zip(cur.iter().zip(prev.iter()))
            .map(|(mi, (u1, u0))| mi * ((half_power_map(p, *u1) - half_power_map(p, *u0)) / h).powi(2))
            .sum::<f64>();
        b += h * basis.gradient_lp_norm_pow(cur, p.p());
        c += h * basis.lp_norm_pow(cur, p.p());
    }
    Ok((a, b, c))
}

fn require_converged(sol: &DiscreteSolution) -> Result<()> {
    if let Some(k) = sol.records().iter().position(|r| !r.converged) {
        return Err(Error::invalid_data(format!("step {} is not converged", k + 1)));
    }
    Ok(())
}

fn snap(grid: &TimeGrid, t_star: f64) -> Result<usize> {
    if !(t_star > 0.0 && t_star <= grid.t_final() * (1.0 + 1e-12)) {
        return Err(Error::invalid_argument(format!(
            "cutoff {t_star} outside (0, {}]",
            grid.t_final()
        )));
    }
    let k = grid.steps_until(t_star);
    if k == 0 {
        return Err(Error::invalid_argument(format!(
            "cutoff {t_star} is shorter than one step"
        )));
    }
    Ok(k)
}

pub fn energy_lhs(sol: &DiscreteSolution, t_star: f64) -> Result<EnergyLedger> {
    require_converged(sol)?;
    let k = snap(sol.grid(), t_star)?;
    if k > sol.completed_steps() {
        return Err(Error::invalid_argument("cutoff beyond the computed steps"));
    }
    let (term_a, term_b, term_c) = window_terms(sol, 0, k)?;
    let basis = sol.basis()?;
    Ok(EnergyLedger {
        t_star_requested: t_star,
        t_star: sol.grid().time(k),
        steps: k,
        term_a,
        term_b,
        term_c,
        term_d: basis.gradient_lp_norm_pow(sol.state(k), sol.spec().exponent.p()),
    })
}

/// Boundary-data majorant, split so the constant-shift behaviour is visible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Majorant {
    pub t_star: f64,
    /// `∫ |ψ(·,0)|^p`
    pub initial_value: f64,
    /// `∫ |ψ_x(·,0)|^p`
    pub initial_gradient: f64,
    /// `∫∫ |ψ|^p`
    pub value: f64,
    /// `∫∫ |ψ_x|^p`
    pub gradient: f64,
    /// `∫∫ |ψ_t|^p`
    pub time_derivative: f64,
    /// `∫∫ |ψ_xt|^p`
    pub mixed_derivative: f64,
}

impl Majorant {
    pub fn total(&self) -> f64 {
        self.initial_value
            + self.initial_gradient
            + self.value
            + self.gradient
            + self.time_derivative
            + self.mixed_derivative
    }

    /// Terms that do not see a constant shift of `ψ`.
    pub fn derivative_terms(&self) -> [f64; 4] {
        [
            self.initial_gradient,
            self.gradient,
            self.time_derivative,
            self.mixed_derivative,
        ]
    }
}

fn space_integral(mesh: &Mesh, quad: &QuadratureRule, f: impl Fn(f64) -> f64) -> f64 {
    (0..mesh.element_count())
        .map(|e| quad.integrate(mesh.nodes()[e], mesh.nodes()[e + 1], &f))
        .sum()
}

/// Space integrals of the four majorant integrands over slab `k`.
fn slab_majorant(psi: &BoundaryExpr, p: f64, mesh: &Mesh, quad: &QuadratureRule, t0: f64, h: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (s, w) in quad.iter() {
        let t = t0 + s * h;
        let vals = [
            space_integral(mesh, quad, |x| psi.value(x, t).abs().powf(p)),
            space_integral(mesh, quad, |x| psi.dx(x, t).abs().powf(p)),
            space_integral(mesh, quad, |x| psi.dt(x, t).abs().powf(p)),
            space_integral(mesh, quad, |x| psi.dxdt(x, t).abs().powf(p)),
        ];
        for (o, v) in out.iter_mut().zip(vals) {
            *o += w * h * v;
        }
    }
    out
}

fn majorant_series(psi: &BoundaryExpr, p: Exponent, mesh: &Mesh, grid: &TimeGrid, k_max: usize) -> Result<Vec<Majorant>> {
    let quad = gauss_rule(MAJORANT_ORDER)?;
    let pe = p.p();
    let initial_value = space_integral(mesh, &quad, |x| psi.value(x, 0.0).abs().powf(pe));
    let initial_gradient = space_integral(mesh, &quad, |x| psi.dx(x, 0.0).abs().powf(pe));
    let mut acc = [0.0; 4];
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k > 0 {
            let slab = slab_majorant(psi, pe, mesh, &quad, grid.time(k - 1), grid.step());
            for (a, s) in acc.iter_mut().zip(slab) {
                *a += s;
            }
        }
        let m = Majorant {
            t_star: grid.time(k),
            initial_value,
            initial_gradient,
            value: acc[0],
            gradient: acc[1],
            time_derivative: acc[2],
            mixed_derivative: acc[3],
        };
        if !m.total().is_finite() {
            return Err(Error::numeric(0, "non-finite boundary majorant"));
        }
        out.push(m);
    }
    Ok(out)
}

/// `Q(ψ, T*)` by Gauss quadrature of the closed-form derivative evaluators,
/// with `T*` snapped down to a step boundary.
pub fn boundary_majorant(psi: &BoundaryExpr, p: Exponent, mesh: &Mesh, grid: &TimeGrid, t_star: f64) -> Result<Majorant> {
    let k = snap(grid, t_star)?;
    Ok(majorant_series(psi, p, mesh, grid, k)?.pop().expect("non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub ledger: EnergyLedger,
    pub majorant: Majorant,
    pub lhs: f64,
    pub q: f64,
    /// `lhs / q`; zero when both vanish, `+∞` when only `q` does.
    pub ratio: f64,
    /// `Σ h Σ m_i |(P(u_k) − P(u_{k−1}))/h|² + term_b` with `P(u) = |u|^{p−2}u`.
    pub t_regularity: f64,
    /// First summand of `t_regularity`.
    pub power_derivative_energy: f64,
    /// `4 ‖u‖∞^{p−2}`, the factor bounding it by `term_a`.
    pub uniform_bound_constant: f64,
    pub linkage_ok: bool,
    /// Derivative terms of `Q` unchanged under `ψ → ψ + 1`.
    pub gamma_stable: bool,
    pub diagnostic: Option<String>,
}

impl EstimateReport {
    pub fn pass(&self) -> bool {
        self.ratio.is_finite() && self.linkage_ok && self.gamma_stable
    }
}

fn power_derivative_energy(sol: &DiscreteSolution, basis: &Basis, k: usize) -> f64 {
    let p = sol.spec().exponent;
    let h = sol.grid().step();
    (1..=k)
        .map(|j| {
            let (prev, cur) = (sol.state(j - 1), sol.state(j));
            h * basis
                .lumped_mass()
                .iter()
                .zip(cur.iter().zip(prev.iter()))
                .map(|(m, (a, b))| m * ((power(p, *a) - power(p, *b)) / h).powi(2))
                .sum::<f64>()
        })
        .sum()
}

pub fn check_galerkin_estimate(sol: &DiscreteSolution, psi: &BoundaryExpr, cutoffs: &[f64]) -> Result<Vec<EstimateReport>> {
    require_converged(sol)?;
    let basis = sol.basis()?;
    let p = sol.spec().exponent;
    let ks = cutoffs.iter().map(|&t| snap(sol.grid(), t)).collect::<Result<Vec<_>>>()?;
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let series = majorant_series(psi, p, sol.mesh(), sol.grid(), k_max)?;
    let shifted = majorant_series(&psi.shifted(1.0), p, sol.mesh(), sol.grid(), k_max)?;
    cutoffs
        .iter()
        .zip(&ks)
        .map(|(&t, &k)| {
            let ledger = energy_lhs(sol, t)?;
            let majorant = series[k];
            let lhs = ledger.lhs();
            let q = majorant.total();
            let (ratio, diagnostic) = if q > 0.0 {
                (lhs / q, None)
            } else if lhs == 0.0 {
                (0.0, None)
            } else {
                (
                    f64::INFINITY,
                    Some("majorant vanishes but the discrete energy does not".to_string()),
                )
            };
            let sup = sol.states()[..=k].iter().map(|s| s.max_abs()).fold(0.0, f64::max);
            let constant = 4.0 * sup.powf(p.p() - 2.0);
            let pde = power_derivative_energy(sol, &basis, k);
            let linkage_ok = pde <= constant * ledger.term_a * (1.0 + 1e-10) + f64::MIN_POSITIVE;
            Ok(EstimateReport {
                ledger,
                majorant,
                lhs,
                q,
                ratio,
                t_regularity: pde + ledger.term_b,
                power_derivative_energy: pde,
                uniform_bound_constant: constant,
                linkage_ok,
                gamma_stable: shifted[k].derivative_terms() == majorant.derivative_terms(),
                diagnostic,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallTrace {
    /// `(kh, ∫|u_k'|^p)` for `k = 0..=m_t`.
    pub points: Vec<(f64, f64)>,
    /// `max_k (ξ(kh) − Q(kh)) / Σ_{j≤k} h ξ_j` over steps with positive
    /// denominator; zero when no step exceeds its majorant.
    pub c_emp: f64,
}

pub fn gronwall_trace(sol: &DiscreteSolution) -> Result<GronwallTrace> {
    require_converged(sol)?;
    let basis = sol.basis()?;
    let p = sol.spec().exponent;
    let grid = sol.grid();
    let xi: Vec<f64> = sol
        .states()
        .iter()
        .map(|u| basis.gradient_lp_norm_pow(u, p.p()))
        .collect();
    let q = majorant_series(&sol.spec().boundary, p, sol.mesh(), grid, sol.completed_steps())?;
    let mut c_emp: f64 = 0.0;
    let mut integral = 0.0;
    for k in 1..xi.len() {
        integral += grid.step() * xi[k];
        if integral > 0.0 {
            c_emp = c_emp.max((xi[k] - q[k].total()) / integral);
        }
    }
    Ok(GronwallTrace {
        points: xi.iter().enumerate().map(|(k, &v)| (grid.time(k), v)).collect(),
        c_emp,
    })
}

/// Both sides of the slab-average contraction for `ψ` and for `ψ_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// `Σ_i m_i Σ_k h |(ψ̄_k − ψ̄_{k−1})(x_i)/h|^p`
    pub value_lhs: f64,
    /// `Σ_i m_i ∫_0^T |ψ_t(x_i, t)|^p dt`
    pub value_rhs: f64,
    pub gradient_lhs: f64,
    pub gradient_rhs: f64,
    /// `(rhs − lhs) / rhs` for each pair, zero when both sides vanish.
    pub value_slack: f64,
    pub gradient_slack: f64,
    pub pass: bool,
}

/// Relative slack tolerated before the contraction check fails.
pub const CONTRACTION_SLACK: f64 = -1e-8;

fn relative_slack(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 && rhs == 0.0 {
        0.0
    } else {
        (rhs - lhs) / rhs.max(f64::MIN_POSITIVE)
    }
}

/// `ψ` is extended by `ψ(·, 0)` on `[−h, 0]`, as in [`average_boundary`],
/// so the first difference is `ψ̄_1 − ψ(·, 0)`. With that extension the
/// inequality holds for every smooth `ψ`.
///
/// [`average_boundary`]: crate::discretization::average_boundary
pub fn check_average_contraction(psi: &BoundaryExpr, p: Exponent, mesh: &Mesh, grid: &TimeGrid) -> Result<ContractionReport> {
    let avg_quad = gauss_rule(4)?;
    let int_quad = gauss_rule(MAJORANT_ORDER)?;
    let pe = p.p();
    let h = grid.step();
    let n = mesh.node_count();
    let weights: Vec<f64> = {
        let mut w = vec![0.0; n];
        for e in 0..mesh.element_count() {
            let len = mesh.element_length(e);
            w[e] += 0.5 * len;
            w[e + 1] += 0.5 * len;
        }
        w
    };
    let mut sides = [0.0; 4];
    for (i, &x) in mesh.nodes().iter().enumerate() {
        let avg = |t0: f64, f: &dyn Fn(f64) -> f64| time_average(&avg_quad, t0, h, f);
        let value = |t: f64| psi.value(x, t);
        let slope = |t: f64| psi.dx(x, t);
        let mut prev_v = value(0.0);
        let mut prev_g = slope(0.0);
        let mut local = [0.0; 4];
        for k in 1..=grid.steps() {
            let t0 = grid.time(k - 1);
            let (v, g) = (avg(t0, &value), avg(t0, &slope));
            local[0] += h * ((v - prev_v) / h).abs().powf(pe);
            local[2] += h * ((g - prev_g) / h).abs().powf(pe);
            local[1] += int_quad.integrate(t0, grid.time(k), |t| psi.dt(x, t).abs().powf(pe));
            local[3] += int_quad.integrate(t0, grid.time(k), |t| psi.dxdt(x, t).abs().powf(pe));
            prev_v = v;
            prev_g = g;
        }
        for (s, l) in sides.iter_mut().zip(local) {
            *s += weights[i] * l;
        }
    }
    if sides.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(0, "non-finite contraction integral"));
    }
    let value_slack = relative_slack(sides[0], sides[1]);
    let gradient_slack = relative_slack(sides[2], sides[3]);
    Ok(ContractionReport {
        value_lhs: sides[0],
        value_rhs: sides[1],
        gradient_lhs: sides[2],
        gradient_rhs: sides[3],
        value_slack,
        gradient_slack,
        pass: value_slack >= CONTRACTION_SLACK && gradient_slack >= CONTRACTION_SLACK,
    })
}

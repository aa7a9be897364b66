use serde::{Deserialize, Serialize};

use crate::discretization::{average_boundary, BoundaryExpr};
use crate::error::{Error, Result};
use crate::geometry::gauss_rule;
use crate::solver::DiscreteSolution;
use crate::stepper::MassTreatment;

/// Ordering tolerance for the lumped scheme.
pub const ORDER_TOLERANCE: f64 = 1e-9;
/// Advisory tolerance when the time term uses consistent quadrature.
pub const CONSISTENT_ORDER_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Principle {
    Maximum,
    Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleReport {
    pub principle: Principle,
    /// Smallest signed margin; negative values are violations.
    pub worst_violation: f64,
    /// `(node, step)` of the worst margin.
    pub location: Option<(usize, usize)>,
    pub tolerance: f64,
    pub pass: bool,
    /// Set when the solution uses consistent mass, where discrete order
    /// principles only hold up to consistency error.
    pub advisory: bool,
}

fn effective_tolerance(sol: &DiscreteSolution, tol: f64) -> (f64, bool) {
    match sol.config().mass {
        MassTreatment::Lumped => (tol, false),
        MassTreatment::Consistent => (tol.max(CONSISTENT_ORDER_TOLERANCE), true),
    }
}

/// Interior values against the range of `ψ_h` on the discrete parabolic
/// boundary (all nodes of the initial slice, end nodes of every slab).
pub fn max_principle_check(sol: &DiscreteSolution, psi: &BoundaryExpr, tol: f64) -> Result<PrincipleReport> {
    if !sol.all_converged() {
        return Err(Error::invalid_data("solution has unconverged steps"));
    }
    let quad = gauss_rule(sol.config().quadrature_order)?;
    let lift = average_boundary(psi, sol.grid(), sol.mesh(), &quad)?;
    let last = sol.mesh().node_count() - 1;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in lift.initial().iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    for k in 1..=sol.completed_steps() {
        for i in [0, last] {
            lo = lo.min(lift.slice(k)[i]);
            hi = hi.max(lift.slice(k)[i]);
        }
    }
    let mut worst = f64::INFINITY;
    let mut location = None;
    for k in 1..=sol.completed_steps() {
        for i in 1..last {
            let u = sol.state(k)[i];
            let margin = (u - lo).min(hi - u);
            if margin < worst {
                worst = margin;
                location = Some((i, k));
            }
        }
    }
    if location.is_none() {
        worst = 0.0;
    }
    let (tolerance, advisory) = effective_tolerance(sol, tol);
    Ok(PrincipleReport {
        principle: Principle::Maximum,
        worst_violation: worst,
        location,
        tolerance,
        pass: worst >= -tolerance,
        advisory,
    })
}

/// Checks `u_2 ≤ u_1 + tol` at every node and step, after confirming the
/// data are ordered on the parabolic boundary.
pub fn comparison_check(sol1: &DiscreteSolution, sol2: &DiscreteSolution, tol: f64) -> Result<PrincipleReport> {
    if sol1.mesh() != sol2.mesh() {
        return Err(Error::invalid_argument("comparison needs identical meshes"));
    }
    if sol1.grid() != sol2.grid() {
        return Err(Error::invalid_argument("comparison needs identical time grids"));
    }
    let last = sol1.mesh().node_count() - 1;
    let steps = sol1.completed_steps().min(sol2.completed_steps());
    for (i, (a, b)) in sol1.state(0).iter().zip(sol2.state(0).iter()).enumerate() {
        if b > a {
            return Err(Error::PreconditionFailure(format!(
                "initial data not ordered at node {i}: {b} > {a}"
            )));
        }
    }
    for k in 1..=steps {
        for i in [0, last] {
            if sol2.state(k)[i] > sol1.state(k)[i] {
                return Err(Error::PreconditionFailure(format!(
                    "boundary data not ordered at node {i}, step {k}"
                )));
            }
        }
    }
    let mut worst = f64::INFINITY;
    let mut location = None;
    for k in 0..=steps {
        for (i, (a, b)) in sol1.state(k).iter().zip(sol2.state(k).iter()).enumerate() {
            if a - b < worst {
                worst = a - b;
                location = Some((i, k));
            }
        }
    }
    let (tolerance, advisory) = effective_tolerance(sol1, tol);
    Ok(PrincipleReport {
        principle: Principle::Comparison,
        worst_violation: worst,
        location,
        tolerance,
        pass: worst >= -tolerance,
        advisory,
    })
}

use serde::{Deserialize, Serialize};

use super::principles::comparison_check;
use crate::discretization::TimeGrid;
use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::Mesh;
use crate::solver::{lp_distance, solve, DiscreteSolution, ProblemSpec};
use crate::stepper::SolveConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeEntry {
    pub gamma: f64,
    /// Worst margin of `u_{−γ} ≤ u_0`.
    pub lower_margin: f64,
    /// Worst margin of `u_0 ≤ u_{+γ}`.
    pub upper_margin: f64,
    pub ordered: bool,
    /// `‖u_{+γ} − u_{−γ}‖` in `L^p(Ω_T)`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeReport {
    pub entries: Vec<SqueezeEntry>,
    pub gaps_decreasing: bool,
    pub tolerance: f64,
    pub complete: bool,
    pub failure: Option<String>,
}

impl SqueezeReport {
    pub fn pass(&self) -> bool {
        self.complete && self.gaps_decreasing && self.entries.iter().all(|e| e.ordered)
    }
}

/// Solves with data `ψ − γ`, `ψ`, `ψ + γ` for each `γ` (concurrently under
/// parallel execution), checks the nodal ordering and measures the gap.
pub fn gamma_squeeze(
    spec: &ProblemSpec,
    gammas: &[f64],
    grid: &TimeGrid,
    mesh: &Mesh,
    cfg: &SolveConfig,
    tol: f64,
) -> Result<SqueezeReport> {
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid_argument("gamma ladder must be non-empty and positive"));
    }
    if gammas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid_argument("gamma ladder must be strictly decreasing"));
    }
    let mut shifts = vec![0.0];
    for g in gammas {
        shifts.push(*g);
        shifts.push(-*g);
    }
    let runs: Vec<Result<DiscreteSolution>> =
        exec::map_slice(cfg.execution, &shifts, |&s| solve(&spec.shifted(s), grid, mesh, cfg));
    let mut runs = runs.into_iter();
    let base = match runs.next().expect("base run") {
        Ok(s) => s,
        Err(e @ Error::InvalidArgument(_)) => return Err(e),
        Err(e) => {
            return Ok(SqueezeReport {
                entries: Vec::new(),
                gaps_decreasing: false,
                tolerance: tol,
                complete: false,
                failure: Some(format!("unshifted run: {e}")),
            })
        }
    };
    let mut entries = Vec::with_capacity(gammas.len());
    let mut failure = None;
    for &g in gammas {
        let (plus, minus) = (runs.next().expect("plus run"), runs.next().expect("minus run"));
        let (plus, minus) = match (plus, minus) {
            (Ok(p), Ok(m)) => (p, m),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(format!("gamma {g}: {e}"));
                break;
            }
        };
        let upper = comparison_check(&plus, &base, tol)?;
        let lower = comparison_check(&base, &minus, tol)?;
        entries.push(SqueezeEntry {
            gamma: g,
            lower_margin: lower.worst_violation,
            upper_margin: upper.worst_violation,
            ordered: lower.pass && upper.pass,
            gap: lp_distance(&plus, &minus)?,
        });
    }
    let gaps_decreasing = entries.windows(2).all(|w| w[1].gap < w[0].gap);
    Ok(SqueezeReport {
        complete: failure.is_none(),
        gaps_decreasing,
        tolerance: tol,
        entries,
        failure,
    })
}

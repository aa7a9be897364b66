use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{BoundaryExpr, BoundaryFamily, TabulatedProfile};
use crate::error::{Error, Result};
use crate::model::{power, Exponent};
use crate::solver::{error_norms, DiscreteSolution, ErrorNorms};

/// Tabulation intervals used when the caller has no preference.
pub const DEFAULT_ORACLE_RESOLUTION: usize = 2000;
/// Target spacing of the RK4 integration in the shooting solve.
const SHOOTING_SPACING: f64 = 1e-4;
const END_VALUE_TOLERANCE: f64 = 1e-10;
const TURNING_ZONE: f64 = 0.05;
const TURNING_REFINEMENT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleFamily {
    HeatSine,
    SeparableP,
}

/// Closed-form or shooting-based exact solution `u = e^{−λt} v(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    family: OracleFamily,
    exponent: Exponent,
    a: f64,
    b: f64,
    /// Decay rate on `(a, b)`.
    rate: f64,
    /// `v` on `(a, b)`; `None` for the closed-form sine.
    profile: Option<Arc<TabulatedProfile>>,
    /// `|v(b)|` after normalization.
    end_value: f64,
    /// Relative drift of `|v'|^p + λ|v|^p` over the samples.
    certification_residual: f64,
}

impl ExactSolution {
    pub fn family(&self) -> OracleFamily {
        self.family
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Eigenvalue scaled back to the unit interval.
    pub fn unit_eigenvalue(&self) -> f64 {
        self.rate * (self.b - self.a).powf(self.exponent.p())
    }

    pub fn end_value(&self) -> f64 {
        self.end_value
    }

    pub fn certification_residual(&self) -> f64 {
        self.certification_residual
    }

    pub fn profile(&self) -> Option<&TabulatedProfile> {
        self.profile.as_deref()
    }

    fn spatial(&self, x: f64) -> (f64, f64) {
        match &self.profile {
            Some(v) => v.eval(x),
            None => {
                let k = PI / (self.b - self.a);
                let s = k * (x - self.a);
                (s.sin(), k * s.cos())
            }
        }
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        (-self.rate * t).exp() * self.spatial(x).0
    }

    pub fn dx(&self, x: f64, t: f64) -> f64 {
        (-self.rate * t).exp() * self.spatial(x).1
    }

    /// Data `ψ` equal to the exact solution, so it can be marched directly.
    pub fn boundary(&self) -> Result<BoundaryExpr> {
        match &self.profile {
            Some(v) => Ok(BoundaryExpr::new(BoundaryFamily::Profile {
                amplitude: 1.0,
                rate: self.rate,
                profile: v.clone(),
            })),
            None => {
                if self.a != 0.0 {
                    return Err(Error::invalid_argument("heat oracle boundary needs a = 0"));
                }
                Ok(BoundaryExpr::new(BoundaryFamily::SinBump {
                    amplitude: 1.0,
                    offset: 0.0,
                    wavenumber: 1.0 / self.b,
                }))
            }
        }
    }

    /// Same solution mapped from `(0, 1)` onto `(a, b)`.
    pub fn rescaled(&self, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::invalid_argument(format!("invalid interval ({a}, {b})")));
        }
        let ratio = (b - a) / (self.b - self.a);
        let profile = match &self.profile {
            Some(v) => Some(Arc::new(TabulatedProfile::new(
                a,
                b,
                v.values().to_vec(),
                v.slopes().iter().map(|s| s / ratio).collect(),
            )?)),
            None => None,
        };
        Ok(ExactSolution {
            a,
            b,
            rate: self.rate / ratio.powf(self.exponent.p()),
            profile,
            ..self.clone()
        })
    }
}

/// `e^{−(π/L)²t} sin(π(x−a)/L)`, exact for the heat equation.
pub fn heat_sine_oracle(p: Exponent, a: f64, b: f64) -> Result<ExactSolution> {
    if !p.is_p2_limit() {
        return Err(Error::invalid_argument("the heat-sine oracle needs the p = 2 limit mode"));
    }
    if !(a < b) {
        return Err(Error::invalid_argument(format!("invalid interval ({a}, {b})")));
    }
    Ok(ExactSolution {
        family: OracleFamily::HeatSine,
        exponent: p,
        a,
        b,
        rate: (PI / (b - a)).powi(2),
        profile: None,
        end_value: 0.0,
        certification_residual: 0.0,
    })
}

/// First eigenvalue of `−(|v'|^{p−2}v')' = (p−1)λ|v|^{p−2}v` on `(0, 1)`
/// in closed form: `λ = (2π / (p sin(π/p)))^p`.
pub fn p_sine_eigenvalue(p: Exponent) -> f64 {
    let p = p.p();
    (2.0 * PI / (p * (PI / p).sin())).powf(p)
}

struct Shot {
    end: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

/// RK4 on `(v, φ = |v'|^{p−2}v')` from `v(0) = 0, v'(0) = 1`.
fn shoot(p: Exponent, lambda: f64, intervals: usize, substeps: usize, keep: bool) -> Shot {
    let mu = (p.p() - 1.0) * lambda;
    let inv = 1.0 / (p.p() - 1.0);
    let slope = |phi: f64| phi.abs().powf(inv).copysign(phi);
    let rhs = |v: f64, phi: f64| (slope(phi), -mu * power(p, v));
    let width = 1.0 / intervals as f64;
    let (mut v, mut phi) = (0.0_f64, 1.0_f64);
    let mut values = Vec::new();
    let mut slopes = Vec::new();
    if keep {
        values.push(v);
        slopes.push(slope(phi));
    }
    for _ in 0..intervals {
        // v' is only Hölder continuous where φ changes sign; refine there.
        let n = if phi.abs() < TURNING_ZONE { substeps * TURNING_REFINEMENT } else { substeps };
        let dx = width / n as f64;
        for _ in 0..n {
            let k1 = rhs(v, phi);
            let k2 = rhs(v + 0.5 * dx * k1.0, phi + 0.5 * dx * k1.1);
            let k3 = rhs(v + 0.5 * dx * k2.0, phi + 0.5 * dx * k2.1);
            let k4 = rhs(v + dx * k3.0, phi + dx * k3.1);
            v += dx / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            phi += dx / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        if keep {
            values.push(v);
            slopes.push(slope(phi));
        }
    }
    Shot { end: v, values, slopes }
}

/// Eigenpair of the separable ansatz on `(0, 1)` by shooting and bisection
/// on `λ`, with `v` normalized to maximum 1.
pub fn separable_oracle(p: Exponent, resolution: usize) -> Result<ExactSolution> {
    if resolution < 100 {
        return Err(Error::invalid_argument("oracle resolution must be at least 100"));
    }
    // An even count puts a sample on the symmetry point.
    let intervals = resolution + resolution % 2;
    let substeps = ((1.0 / SHOOTING_SPACING) / intervals as f64).ceil().max(1.0) as usize;
    let end = |lambda: f64| shoot(p, lambda, intervals, substeps, false).end;

    let mut lo = 1.0;
    if end(lo) <= 0.0 {
        return Err(Error::OracleFailure(format!(
            "v(1) = {} is not positive at lambda = 1",
            end(lo)
        )));
    }
    let mut hi = 2.0;
    while end(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::OracleFailure("could not bracket the eigenvalue".into()));
        }
    }
    // Target well below the tolerance: normalization scales v(1) up.
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..200 {
        lambda = 0.5 * (lo + hi);
        let e = end(lambda);
        if e.abs() <= 1e-3 * END_VALUE_TOLERANCE || hi - lo <= 4.0 * f64::EPSILON * lambda {
            break;
        }
        if e > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }
    let shot = shoot(p, lambda, intervals, substeps, true);
    let vmax = shot.values.iter().copied().fold(0.0, f64::max);
    if !(vmax > 0.0) {
        return Err(Error::OracleFailure("shooting produced a non-positive profile".into()));
    }
    let values: Vec<f64> = shot.values.iter().map(|v| v / vmax).collect();
    let slopes: Vec<f64> = shot.slopes.iter().map(|s| s / vmax).collect();
    let end_value = values.last().copied().unwrap_or(f64::NAN).abs();
    if !(end_value <= END_VALUE_TOLERANCE) {
        return Err(Error::OracleFailure(format!(
            "bisection stalled with |v(1)| = {end_value:e} at lambda = {lambda}"
        )));
    }
    if values[1..values.len() - 1].iter().any(|v| *v <= 0.0) {
        return Err(Error::OracleFailure("profile changes sign inside the interval".into()));
    }
    let pe = p.p();
    let energy: Vec<f64> = values
        .iter()
        .zip(&slopes)
        .map(|(v, s)| s.abs().powf(pe) + lambda * v.abs().powf(pe))
        .collect();
    let certification_residual = energy
        .iter()
        .map(|e| (e - energy[0]).abs() / energy[0])
        .fold(0.0, f64::max);
    Ok(ExactSolution {
        family: OracleFamily::SeparableP,
        exponent: p,
        a: 0.0,
        b: 1.0,
        rate: lambda,
        profile: Some(Arc::new(TabulatedProfile::new(0.0, 1.0, values, slopes)?)),
        end_value,
        certification_residual,
    })
}

/// `L^p(Ω_T)` and final-time `L^∞` error of a discrete solution.
pub fn error_vs_oracle(sol: &DiscreteSolution, exact: &ExactSolution) -> Result<ErrorNorms> {
    let (a, b) = exact.interval();
    if sol.mesh().a() != a || sol.mesh().b() != b {
        return Err(Error::invalid_argument(format!(
            "oracle lives on ({a}, {b}), solution on ({}, {})",
            sol.mesh().a(),
            sol.mesh().b()
        )));
    }
    error_norms(sol, &|x, t| exact.value(x, t))
}

//! Time grid, closed-form boundary data and its slab averages.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{interpolate_nodal, Mesh, NodalVector, QuadratureRule};

/// Uniform time grid `0, h, 2h, …, m_t h = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    steps: usize,
    t_final: f64,
}

impl TimeGrid {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// `k h`, with `k = m_t` mapping exactly onto `T`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_final
        } else {
            k as f64 * self.step
        }
    }

    /// Number of whole steps in `[0, t]`, tolerant to rounding at step boundaries.
    pub fn steps_until(&self, t: f64) -> usize {
        let k = (t / self.step * (1.0 + 1e-12)).floor();
        (k.max(0.0) as usize).min(self.steps)
    }
}

pub fn build_time_grid(t_final: f64, steps: usize) -> Result<TimeGrid> {
    if steps == 0 {
        return Err(Error::invalid_argument("time step count must be at least 1"));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::invalid_argument(format!(
            "final time must be finite and positive, got {t_final}"
        )));
    }
    Ok(TimeGrid {
        step: t_final / steps as f64,
        steps,
        t_final,
    })
}

/// A C¹ profile on `[x0, x1]` sampled on a uniform grid with values and
/// slopes, evaluated by cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedProfile {
    x0: f64,
    x1: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl TabulatedProfile {
    pub fn new(x0: f64, x1: f64, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values.len() != slopes.len() {
            return Err(Error::invalid_argument(
                "profile needs at least two samples and one slope per sample",
            ));
        }
        if !(x0 < x1) {
            return Err(Error::invalid_argument("profile interval must satisfy x0 < x1"));
        }
        if values.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(Error::invalid_data("profile samples must be finite"));
        }
        Ok(TabulatedProfile {
            x0,
            x1,
            values,
            slopes,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.x0, self.x1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    fn spacing(&self) -> f64 {
        (self.x1 - self.x0) / (self.values.len() - 1) as f64
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let dx = self.spacing();
        let s = ((x - self.x0) / dx).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.values.len() - 2);
        (i, s - i as f64)
    }

    /// Value and derivative at `x` (clamped to the interval).
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let dx = self.spacing();
        let (i, s) = self.locate(x);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * dx, self.slopes[i + 1] * dx);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let slope = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / dx;
        (value, slope)
    }
}

/// One monomial `coeff · x^x_pow · t^t_pow`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coeff: f64,
    pub x_pow: u32,
    pub t_pow: u32,
}

/// Registry of closed-form boundary data families.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryFamily {
    /// `value`
    Constant { value: f64 },
    /// `c0 + cx·x + ct·t`
    AffineXt { c0: f64, cx: f64, ct: f64 },
    /// `offset + amplitude·sin(k π x)`
    SinBump {
        amplitude: f64,
        offset: f64,
        wavenumber: f64,
    },
    /// `amplitude·sin(kt π t)·sin(kx π x)`
    SeparableProduct {
        amplitude: f64,
        time_wavenumber: f64,
        space_wavenumber: f64,
    },
    /// `Σ c x^i t^j`
    Polynomial { terms: Vec<PolyTerm> },
    /// `amplitude·e^{-rate t}·v(x)` for a tabulated profile `v`.
    Profile {
        amplitude: f64,
        rate: f64,
        profile: Arc<TabulatedProfile>,
    },
}

impl BoundaryFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            BoundaryFamily::Constant { .. } => "constant",
            BoundaryFamily::AffineXt { .. } => "affine-xt",
            BoundaryFamily::SinBump { .. } => "sin-bump",
            BoundaryFamily::SeparableProduct { .. } => "separable-product",
            BoundaryFamily::Polynomial { .. } => "polynomial",
            BoundaryFamily::Profile { .. } => "profile",
        }
    }
}

fn ipow(x: f64, n: u32) -> f64 {
    x.powi(n as i32)
}

/// Boundary and initial data `ψ(x, t)` with exact first derivatives and
/// mixed derivative, optionally shifted by a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryExpr {
    family: BoundaryFamily,
    shift: f64,
}

impl BoundaryExpr {
    pub fn new(family: BoundaryFamily) -> Self {
        BoundaryExpr { family, shift: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(BoundaryFamily::Constant { value })
    }

    pub fn family(&self) -> &BoundaryFamily {
        &self.family
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `ψ + γ`. Derivative evaluators are untouched.
    pub fn shifted(&self, gamma: f64) -> Self {
        BoundaryExpr {
            family: self.family.clone(),
            shift: self.shift + gamma,
        }
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        self.shift + self.base_value(x, t)
    }

    fn base_value(&self, x: f64, t: f64) -> f64 {
        match &self.family {
            BoundaryFamily::Constant { value } => *value,
            BoundaryFamily::AffineXt { c0, cx, ct } => c0 + cx * x + ct * t,
            BoundaryFamily::SinBump {
                amplitude,
                offset,
                wavenumber,
            } => offset + amplitude * (wavenumber * PI * x).sin(),
            BoundaryFamily::SeparableProduct {
                amplitude,
                time_wavenumber,
                space_wavenumber,
            } => amplitude * (time_wavenumber * PI * t).sin() * (space_wavenumber * PI * x).sin(),
            BoundaryFamily::Polynomial { terms } => terms
                .iter()
                .map(|m| m.coeff * ipow(x, m.x_pow) * ipow(t, m.t_pow))
                .sum(),
            BoundaryFamily::Profile {
                amplitude,
                rate,
                profile,
            } => amplitude * (-rate * t).exp() * profile.eval(x).0,
        }
    }

    /// `∂ψ/∂t`
    pub fn dt(&self, x: f64, t: f64) -> f64 {
        match &self.family {
            BoundaryFamily::Constant { .. } | BoundaryFamily::SinBump { .. } => 0.0,
            BoundaryFamily::AffineXt { ct, .. } => *ct,
            BoundaryFamily::SeparableProduct {
                amplitude,
                time_wavenumber,
                space_wavenumber,
            } => {
                let w = time_wavenumber * PI;
                amplitude * w * (w * t).cos() * (space_wavenumber * PI * x).sin()
            }
            BoundaryFamily::Polynomial { terms } => terms
                .iter()
                .filter(|m| m.t_pow > 0)
                .map(|m| m.coeff * m.t_pow as f64 * ipow(x, m.x_pow) * ipow(t, m.t_pow - 1))
                .sum(),
            BoundaryFamily::Profile {
                amplitude,
                rate,
                profile,
            } => -rate * amplitude * (-rate * t).exp() * profile.eval(x).0,
        }
    }

    /// `∂ψ/∂x`
    pub fn dx(&self, x: f64, t: f64) -> f64 {
        match &self.family {
            BoundaryFamily::Constant { .. } => 0.0,
            BoundaryFamily::AffineXt { cx, .. } => *cx,
            BoundaryFamily::SinBump {
                amplitude,
                wavenumber,
                ..
            } => {
                let k = wavenumber * PI;
                amplitude * k * (k * x).cos()
            }
            BoundaryFamily::SeparableProduct {
                amplitude,
                time_wavenumber,
                space_wavenumber,
            } => {
                let k = space_wavenumber * PI;
                amplitude * (time_wavenumber * PI * t).sin() * k * (k * x).cos()
            }
            BoundaryFamily::Polynomial { terms } => terms
                .iter()
                .filter(|m| m.x_pow > 0)
                .map(|m| m.coeff * m.x_pow as f64 * ipow(x, m.x_pow - 1) * ipow(t, m.t_pow))
                .sum(),
            BoundaryFamily::Profile {
                amplitude,
                rate,
                profile,
            } => amplitude * (-rate * t).exp() * profile.eval(x).1,
        }
    }

    /// `∂²ψ/∂x∂t`
    pub fn dxdt(&self, x: f64, t: f64) -> f64 {
        match &self.family {
            BoundaryFamily::Constant { .. }
            | BoundaryFamily::AffineXt { .. }
            | BoundaryFamily::SinBump { .. } => 0.0,
            BoundaryFamily::SeparableProduct {
                amplitude,
                time_wavenumber,
                space_wavenumber,
            } => {
                let w = time_wavenumber * PI;
                let k = space_wavenumber * PI;
                amplitude * w * (w * t).cos() * k * (k * x).cos()
            }
            BoundaryFamily::Polynomial { terms } => terms
                .iter()
                .filter(|m| m.x_pow > 0 && m.t_pow > 0)
                .map(|m| {
                    m.coeff
                        * (m.x_pow * m.t_pow) as f64
                        * ipow(x, m.x_pow - 1)
                        * ipow(t, m.t_pow - 1)
                })
                .sum(),
            BoundaryFamily::Profile {
                amplitude,
                rate,
                profile,
            } => -rate * amplitude * (-rate * t).exp() * profile.eval(x).1,
        }
    }

    /// Whether all evaluators vanish identically (`ψ ≡ 0`).
    pub fn is_identically_zero(&self) -> bool {
        if self.shift != 0.0 {
            return false;
        }
        match &self.family {
            BoundaryFamily::Constant { value } => *value == 0.0,
            BoundaryFamily::AffineXt { c0, cx, ct } => *c0 == 0.0 && *cx == 0.0 && *ct == 0.0,
            BoundaryFamily::SinBump {
                amplitude, offset, ..
            } => *amplitude == 0.0 && *offset == 0.0,
            BoundaryFamily::SeparableProduct { amplitude, .. } => *amplitude == 0.0,
            BoundaryFamily::Polynomial { terms } => terms.iter().all(|m| m.coeff == 0.0),
            BoundaryFamily::Profile { amplitude, .. } => *amplitude == 0.0,
        }
    }
}

/// Slab averages of `ψ` at the mesh nodes.
///
/// `slices[0]` is `ψ(·, 0)`; `slices[k]` for `k = 1..=m_t` is the average of
/// `ψ` over `((k-1)h, kh)`, which is the boundary lift on that slab.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedBoundary {
    slices: Vec<NodalVector>,
}

impl AveragedBoundary {
    pub fn slices(&self) -> &[NodalVector] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &NodalVector {
        &self.slices[k]
    }

    pub fn initial(&self) -> &NodalVector {
        &self.slices[0]
    }
}

/// `(1/h) ∫_{t0}^{t0+h} f(τ) dτ` by the given rule.
pub(crate) fn time_average(quad: &QuadratureRule, t0: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    // Averaging deviations from f(t0) keeps constants exact.
    let f0 = f(t0);
    f0 + quad.iter().map(|(s, w)| w * (f(t0 + s * h) - f0)).sum::<f64>()
}

pub fn average_boundary(
    psi: &BoundaryExpr,
    grid: &TimeGrid,
    mesh: &Mesh,
    quad: &QuadratureRule,
) -> Result<AveragedBoundary> {
    let h = grid.step();
    let mut slices = Vec::with_capacity(grid.steps() + 1);
    slices.push(interpolate_nodal(|x| psi.value(x, 0.0), mesh)?);
    for k in 1..=grid.steps() {
        let t0 = grid.time(k - 1);
        slices.push(interpolate_nodal(
            |x| psi.shift + time_average(quad, t0, h, |t| psi.base_value(x, t)),
            mesh,
        )?);
    }
    Ok(AveragedBoundary { slices })
}

/// Backward differences `(f_k - f_{k-1}) / h` for `k = 1..len`; entry
/// `k - 1` of the output belongs to step `k`.
pub fn backward_difference(series: &[NodalVector], h: f64) -> Result<Vec<NodalVector>> {
    if series.len() < 2 {
        return Err(Error::invalid_argument(
            "backward difference needs at least two slices",
        ));
    }
    if let Some(k) = series.windows(2).position(|w| w[0].len() != w[1].len()) {
        return Err(Error::invalid_argument(format!(
            "slice length mismatch between {k} and {}",
            k + 1
        )));
    }
    Ok(series
        .windows(2)
        .map(|w| {
            w[1].iter()
                .zip(w[0].iter())
                .map(|(a, b)| (a - b) / h)
                .collect::<Vec<_>>()
                .into()
        })
        .collect())
}

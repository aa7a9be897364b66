use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gauss_rule, Mesh};
use crate::model::{power, Exponent};
use crate::solver::DiscreteSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeFactor {
    Constant,
    /// `e^{rate·t}`
    Exp { rate: f64 },
    /// `cos(freq·t)`
    Cos { freq: f64 },
}

impl TimeFactor {
    fn value(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::Constant => 1.0,
            TimeFactor::Exp { rate } => (rate * t).exp(),
            TimeFactor::Cos { freq } => (freq * t).cos(),
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::Constant => 0.0,
            TimeFactor::Exp { rate } => rate * (rate * t).exp(),
            TimeFactor::Cos { freq } => -freq * (freq * t).sin(),
        }
    }
}

/// Test field `ζ(x, t) = (Σ c_i x^i) · τ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestField {
    pub coeffs: Vec<f64>,
    pub time: TimeFactor,
}

impl TestField {
    /// `(x − a)(b − x)`, constant in time.
    pub fn bubble(a: f64, b: f64) -> Self {
        TestField {
            coeffs: vec![-a * b, a + b, -1.0],
            time: TimeFactor::Constant,
        }
    }

    pub fn zero() -> Self {
        TestField {
            coeffs: Vec::new(),
            time: TimeFactor::Constant,
        }
    }

    fn poly(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn poly_dx(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * x + i as f64 * c)
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        self.poly(x) * self.time.value(t)
    }

    pub fn dx(&self, x: f64, t: f64) -> f64 {
        self.poly_dx(x) * self.time.value(t)
    }

    pub fn dt(&self, x: f64, t: f64) -> f64 {
        self.poly(x) * self.time.derivative(t)
    }

    fn check_vanishes(&self, a: f64, b: f64) -> Result<()> {
        let scale = self.coeffs.iter().fold(1.0_f64, |m, c| m.max(c.abs())) * (1.0 + a.abs().max(b.abs())).powi(self.coeffs.len() as i32);
        for x in [a, b] {
            if self.poly(x).abs() > 1e-12 * scale {
                return Err(Error::PreconditionFailure(format!(
                    "test field does not vanish at x = {x} (value {})",
                    self.poly(x)
                )));
            }
        }
        Ok(())
    }
}

fn window_steps(sol: &DiscreteSolution, t1: f64, t2: f64) -> Result<(usize, usize)> {
    let h = sol.grid().step();
    let snap = |t: f64| -> Result<usize> {
        let k = (t / h).round();
        if (k * h - t).abs() > 1e-9 * h || k < 0.0 || k as usize > sol.completed_steps() {
            return Err(Error::invalid_argument(format!("window end {t} is not a step boundary")));
        }
        Ok(k as usize)
    };
    let (k1, k2) = (snap(t1)?, snap(t2)?);
    if k1 >= k2 {
        return Err(Error::invalid_argument("window must have t1 < t2"));
    }
    Ok((k1, k2))
}

/// `|[∫ζP(u)]_{t1}^{t2} − ∫∫(P(u)ζ_t − flux(u_x)ζ_x)|` for the discrete
/// solution, with `P(u) = |u|^{p−2}u` and `flux(s) = |s|^{p−2}s`.
///
/// The state is linear per element and constant per slab, so the time
/// integral of `P(u)ζ_t` over a slab is exact.
pub fn weak_form_residual(sol: &DiscreteSolution, zeta: &TestField, window: (f64, f64)) -> Result<f64> {
    let mesh = sol.mesh();
    zeta.check_vanishes(mesh.a(), mesh.b())?;
    let (k1, k2) = window_steps(sol, window.0, window.1)?;
    let quad = gauss_rule(sol.config().quadrature_order.max(4))?;
    let p = sol.spec().exponent;
    let grid = sol.grid();
    let space = |k: usize, f: &dyn Fn(f64, f64, f64) -> f64| -> f64 {
        let u = sol.state(k);
        (0..mesh.element_count())
            .map(|e| {
                let (x0, len) = (mesh.nodes()[e], mesh.element_length(e));
                let slope = (u[e + 1] - u[e]) / len;
                quad.iter()
                    .map(|(s, w)| w * len * f(x0 + s * len, (1.0 - s) * u[e] + s * u[e + 1], slope))
                    .sum::<f64>()
            })
            .sum()
    };
    let (t1, t2) = (grid.time(k1), grid.time(k2));
    let lhs = space(k2, &|x, u, _| zeta.value(x, t2) * power(p, u)) - space(k1, &|x, u, _| zeta.value(x, t1) * power(p, u));
    let mut rhs = 0.0;
    for k in k1 + 1..=k2 {
        let (ta, tb) = (grid.time(k - 1), grid.time(k));
        rhs += space(k, &|x, u, _| power(p, u) * (zeta.value(x, tb) - zeta.value(x, ta)));
        let time_avg: f64 = quad.iter().map(|(s, w)| w * zeta.time.value(ta + s * (tb - ta))).sum();
        rhs -= (tb - ta) * time_avg * space(k, &|x, _, s| power(p, s) * zeta.poly_dx(x));
    }
    Ok((lhs - rhs).abs())
}

/// Same residual for a closed-form field `u(x,t) → (u, u_x)`, integrated
/// with `n_elements × n_slabs` Gauss cells.
pub fn weak_form_residual_field(
    u: &(dyn Fn(f64, f64) -> (f64, f64) + Sync),
    p: Exponent,
    mesh: &Mesh,
    zeta: &TestField,
    window: (f64, f64),
    n_slabs: usize,
) -> Result<f64> {
    zeta.check_vanishes(mesh.a(), mesh.b())?;
    if n_slabs == 0 || !(window.0 < window.1) {
        return Err(Error::invalid_argument("empty time window"));
    }
    let quad = gauss_rule(8)?;
    let space = |t: f64, f: &dyn Fn(f64, f64, f64) -> f64| -> f64 {
        (0..mesh.element_count())
            .map(|e| {
                quad.integrate(mesh.nodes()[e], mesh.nodes()[e + 1], |x| {
                    let (v, vx) = u(x, t);
                    f(x, v, vx)
                })
            })
            .sum()
    };
    let (t1, t2) = window;
    let lhs = space(t2, &|x, v, _| zeta.value(x, t2) * power(p, v)) - space(t1, &|x, v, _| zeta.value(x, t1) * power(p, v));
    let dt = (t2 - t1) / n_slabs as f64;
    let mut rhs = 0.0;
    for j in 0..n_slabs {
        let t0 = t1 + j as f64 * dt;
        rhs += quad.integrate(t0, t0 + dt, |t| {
            space(t, &|x, v, vx| power(p, v) * zeta.dt(x, t) - power(p, vx) * zeta.dx(x, t))
        });
    }
    Ok((lhs - rhs).abs())
}

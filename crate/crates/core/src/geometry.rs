//! One-dimensional meshes, piecewise-linear hat functions and Gauss rules.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing node coordinates on a closed interval `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from explicit coordinates.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid_argument("a mesh needs at least two nodes"));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid_argument("mesh nodes must be finite"));
        }
        if let Some(i) = nodes.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid_argument(format!(
                "mesh nodes must be strictly increasing (nodes {i} and {})",
                i + 1
            )));
        }
        Ok(Mesh { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.b() - self.a()
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn element_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.windows(2).map(|w| w[1] - w[0])
    }

    /// Index of the element containing `x`; the right endpoint maps to the last element.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(self.a()..=self.b()).contains(&x) {
            return None;
        }
        let idx = self.nodes.partition_point(|&n| n <= x);
        Some(idx.saturating_sub(1).min(self.element_count() - 1))
    }

    /// Linear interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Option<f64> {
        let e = self.locate(x)?;
        let (x0, x1) = (self.nodes[e], self.nodes[e + 1]);
        let s = (x - x0) / (x1 - x0);
        Some((1.0 - s) * values[e] + s * values[e + 1])
    }
}

pub fn build_uniform_mesh(n_elements: usize, a: f64, b: f64) -> Result<Mesh> {
    if n_elements == 0 {
        return Err(Error::invalid_argument("n_elements must be at least 1"));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid_argument("interval endpoints must be finite"));
    }
    if a >= b {
        return Err(Error::invalid_argument(format!(
            "interval must satisfy a < b (got a = {a}, b = {b})"
        )));
    }
    let h = (b - a) / n_elements as f64;
    let mut nodes: Vec<f64> = (0..=n_elements).map(|i| a + h * i as f64).collect();
    nodes[n_elements] = b;
    Mesh::from_nodes(nodes)
}

/// Gauss–Legendre points and weights on the reference element `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Integrates `f` over `[x0, x1]`.
    pub fn integrate(&self, x0: f64, x1: f64, f: impl Fn(f64) -> f64) -> f64 {
        let len = x1 - x0;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&xi, &w)| w * f(x0 + xi * len))
            .sum::<f64>()
            * len
    }

    /// Pairs of (reference point, weight).
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

pub const MAX_GAUSS_ORDER: usize = 10;

/// Gauss–Legendre rule with `order` points, exact up to degree `2 order - 1`.
pub fn gauss_rule(order: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_GAUSS_ORDER).contains(&order) {
        return Err(Error::invalid_argument(format!(
            "gauss order must be in 1..={MAX_GAUSS_ORDER}, got {order}"
        )));
    }
    let n = order;
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Newton iteration on P_n from the Chebyshev-like initial guess; the
    // roots are symmetric so only half of them are computed.
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        points[i] = 0.5 * (1.0 - x);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Ok(QuadratureRule { points, weights })
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// One value per mesh node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodalVector(Vec<f64>);

impl NodalVector {
    pub fn new(values: Vec<f64>) -> Self {
        NodalVector(values)
    }

    pub fn constant(len: usize, value: f64) -> Self {
        NodalVector(vec![value; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Deref for NodalVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for NodalVector {
    fn from(v: Vec<f64>) -> Self {
        NodalVector(v)
    }
}

pub fn interpolate_nodal(f: impl Fn(f64) -> f64, mesh: &Mesh) -> Result<NodalVector> {
    let values: Vec<f64> = mesh.nodes().iter().map(|&x| f(x)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid_data(format!(
            "non-finite sample at node {i} (x = {})",
            mesh.nodes()[i]
        )));
    }
    Ok(NodalVector(values))
}

/// Piecewise-linear hat functions on a mesh together with the quadrature
/// tables used for element integrals.
///
/// Trial functions are the hats of the interior nodes `1..n`; the two
/// boundary hats only carry boundary data.
#[derive(Debug, Clone)]
pub struct Basis {
    mesh: Mesh,
    quad: QuadratureRule,
    /// `[1 - xi, xi]` at each reference quadrature point.
    shape: Vec<[f64; 2]>,
    /// Hat slopes `[-1/len, 1/len]` per element.
    slopes: Vec<[f64; 2]>,
    lumped_mass: Vec<f64>,
}

impl Basis {
    pub fn new(mesh: Mesh, quad: QuadratureRule) -> Self {
        let shape = quad.points().iter().map(|&xi| [1.0 - xi, xi]).collect();
        let slopes = mesh
            .element_lengths()
            .map(|len| [-1.0 / len, 1.0 / len])
            .collect();
        let mut lumped_mass = vec![0.0; mesh.node_count()];
        for (e, len) in mesh.element_lengths().enumerate() {
            lumped_mass[e] += 0.5 * len;
            lumped_mass[e + 1] += 0.5 * len;
        }
        Basis {
            mesh,
            quad,
            shape,
            slopes,
            lumped_mass,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    /// Number of trial functions `m` (interior nodes).
    pub fn interior_count(&self) -> usize {
        self.mesh.node_count() - 2
    }

    /// Mesh node index of trial function `j`.
    pub fn interior_node(&self, j: usize) -> usize {
        j + 1
    }

    /// Reference shape values at quadrature point `q`.
    pub fn shape(&self, q: usize) -> [f64; 2] {
        self.shape[q]
    }

    pub fn slopes(&self, e: usize) -> [f64; 2] {
        self.slopes[e]
    }

    /// Row sums of the consistent mass matrix: `∫ φ_i`.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    /// Value of the hat of mesh node `i` at `x`.
    pub fn hat(&self, i: usize, x: f64) -> f64 {
        let nodes = self.mesh.nodes();
        if i > 0 && x >= nodes[i - 1] && x <= nodes[i] {
            return (x - nodes[i - 1]) / (nodes[i] - nodes[i - 1]);
        }
        if i + 1 < nodes.len() && x >= nodes[i] && x <= nodes[i + 1] {
            return (nodes[i + 1] - x) / (nodes[i + 1] - nodes[i]);
        }
        0.0
    }

    /// Physical coordinates of the quadrature points of element `e`.
    pub fn quad_points(&self, e: usize) -> impl Iterator<Item = f64> + '_ {
        let x0 = self.mesh.nodes()[e];
        let len = self.mesh.element_length(e);
        self.quad.points().iter().map(move |&xi| x0 + xi * len)
    }

    /// Slope of the piecewise-linear function `u` on element `e`.
    pub fn element_slope(&self, u: &[f64], e: usize) -> f64 {
        (u[e + 1] - u[e]) / self.mesh.element_length(e)
    }

    /// `∫_e g(u(x), x) dx` for the piecewise-linear `u`.
    pub fn integrate_element(&self, u: &[f64], e: usize, g: impl Fn(f64, f64) -> f64) -> f64 {
        let len = self.mesh.element_length(e);
        let x0 = self.mesh.nodes()[e];
        let mut acc = 0.0;
        for (q, (xi, w)) in self.quad.iter().enumerate() {
            let [l, r] = self.shape[q];
            acc += w * g(l * u[e] + r * u[e + 1], x0 + xi * len);
        }
        acc * len
    }

    /// `∫_Ω |u|^p dx` by element quadrature.
    pub fn lp_norm_pow(&self, u: &[f64], p: f64) -> f64 {
        (0..self.mesh.element_count())
            .map(|e| self.integrate_element(u, e, |v, _| v.abs().powf(p)))
            .sum()
    }

    /// `∫_Ω |u'|^p dx`, exact for piecewise-linear `u`.
    pub fn gradient_lp_norm_pow(&self, u: &[f64], p: f64) -> f64 {
        (0..self.mesh.element_count())
            .map(|e| self.mesh.element_length(e) * self.element_slope(u, e).abs().powf(p))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh_examples() {
        let m = build_uniform_mesh(4, 0.0, 1.0).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let m = build_uniform_mesh(1, -1.0, 1.0).unwrap();
        assert_eq!(m.nodes(), &[-1.0, 1.0]);
        let m = build_uniform_mesh(3, 0.0, 0.3).unwrap();
        for len in m.element_lengths() {
            assert!((len - 0.1).abs() < 1e-15);
        }
        let total: f64 = m.element_lengths().sum();
        assert!((total - 0.3).abs() <= 1e-14 * 0.3);
    }

    #[test]
    fn uniform_mesh_rejects_bad_input() {
        assert!(build_uniform_mesh(0, 0.0, 1.0).is_err());
        assert!(build_uniform_mesh(3, 1.0, 1.0).is_err());
        assert!(build_uniform_mesh(3, 2.0, 1.0).is_err());
        assert!(build_uniform_mesh(3, f64::NAN, 1.0).is_err());
        assert!(build_uniform_mesh(3, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn gauss_examples() {
        let g1 = gauss_rule(1).unwrap();
        assert_eq!(g1.points(), &[0.5]);
        assert_eq!(g1.weights(), &[1.0]);
        let g2 = gauss_rule(2).unwrap();
        assert!((g2.integrate(0.0, 1.0, |x| x * x) - 1.0 / 3.0).abs() <= 2.0 * f64::EPSILON);
        let g3 = gauss_rule(3).unwrap();
        assert!((g3.integrate(0.0, 1.0, |x| x.powi(5)) - 1.0 / 6.0).abs() < 1e-14);
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(11).is_err());
    }

    #[test]
    fn gauss_rules_are_exact_on_monomials() {
        for order in 1..=MAX_GAUSS_ORDER {
            let g = gauss_rule(order).unwrap();
            let wsum: f64 = g.weights().iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14, "order {order}: weight sum {wsum}");
            assert!(g.weights().iter().all(|&w| w > 0.0));
            for deg in 0..2 * order {
                let got = g.integrate(0.0, 1.0, |x| x.powi(deg as i32));
                let want = 1.0 / (deg as f64 + 1.0);
                assert!(
                    (got - want).abs() < 1e-14,
                    "order {order} degree {deg}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn interpolation_examples() {
        let m = build_uniform_mesh(5, 0.0, 2.0).unwrap();
        let c = interpolate_nodal(|_| 3.0, &m).unwrap();
        assert!(c.iter().all(|&v| v == 3.0));

        let m = build_uniform_mesh(2, 0.0, 1.0).unwrap();
        assert_eq!(&*interpolate_nodal(|x| x, &m).unwrap(), &[0.0, 0.5, 1.0]);

        let m = build_uniform_mesh(4, 0.0, 1.0).unwrap();
        let s = interpolate_nodal(|x| (std::f64::consts::PI * x).sin(), &m).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in s.iter().zip([0.0, r, 1.0, r, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }

        assert!(matches!(
            interpolate_nodal(|x| 1.0 / (x - 0.5), &m),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn hats_are_nodal_and_partition_unity() {
        let mesh = Mesh::from_nodes(vec![0.0, 0.1, 0.35, 0.5, 0.9, 1.0]).unwrap();
        let basis = Basis::new(mesh.clone(), gauss_rule(4).unwrap());
        for i in 0..mesh.node_count() {
            for (k, &x) in mesh.nodes().iter().enumerate() {
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((basis.hat(i, x) - want).abs() < 1e-14);
            }
        }
        for e in 0..mesh.element_count() {
            for x in basis.quad_points(e) {
                let sum: f64 = (0..mesh.node_count()).map(|i| basis.hat(i, x)).sum();
                assert!((sum - 1.0).abs() < 1e-14);
            }
        }
        for j in 0..basis.interior_count() {
            let i = basis.interior_node(j);
            assert_eq!(basis.hat(i, mesh.a()), 0.0);
            assert_eq!(basis.hat(i, mesh.b()), 0.0);
        }
    }

    #[test]
    fn l2_norm_of_interpolant_matches_closed_form() {
        let mesh = Mesh::from_nodes(vec![0.0, 0.2, 0.5, 1.0]).unwrap();
        let basis = Basis::new(mesh.clone(), gauss_rule(3).unwrap());
        let u = [1.0, -2.0, 0.5, 3.0];
        // ∫ of a squared linear on [x0,x1] is len (a² + ab + b²) / 3
        let want: f64 = (0..3)
            .map(|e| {
                let (a, b) = (u[e], u[e + 1]);
                mesh.element_length(e) * (a * a + a * b + b * b) / 3.0
            })
            .sum();
        assert!((basis.lp_norm_pow(&u, 2.0) - want).abs() < 1e-14);
    }

    #[test]
    fn refinement_reproduces_shared_nodes() {
        let f = |x: f64| (3.0 * x).sin() + x * x;
        let coarse = interpolate_nodal(f, &build_uniform_mesh(8, 0.0, 1.0).unwrap()).unwrap();
        let fine = interpolate_nodal(f, &build_uniform_mesh(16, 0.0, 1.0).unwrap()).unwrap();
        for i in 0..coarse.len() {
            assert!((coarse[i] - fine[2 * i]).abs() < 1e-15);
        }
    }

    #[test]
    fn locate_and_interpolate() {
        let mesh = build_uniform_mesh(4, 0.0, 1.0).unwrap();
        assert_eq!(mesh.locate(0.0), Some(0));
        assert_eq!(mesh.locate(1.0), Some(3));
        assert_eq!(mesh.locate(0.3), Some(1));
        assert_eq!(mesh.locate(1.5), None);
        let u = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(mesh.interpolate(&u, 0.125), Some(0.5));
    }
}

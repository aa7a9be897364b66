//! p-power algebra: the nonlinear maps of the equation and the vector
//! inequalities the energy estimates rest on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Offset used to emulate the linear limit `p = 2` with the strictly
/// degenerate machinery.
pub const P2_LIMIT_OFFSET: f64 = 1e-12;

/// Relative slack tolerated when checking the vector inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-12;

/// Growth exponent `p > 2` and its conjugate `q = p / (p - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    p: f64,
    q: f64,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 2.0 {
            return Err(Error::invalid_argument(format!(
                "exponent p must be finite and > 2, got {p}"
            )));
        }
        Ok(Exponent { p, q: p / (p - 1.0) })
    }

    /// `p = 2 + 1e-12`: numerically the heat equation.
    pub fn p2_limit() -> Self {
        let p = 2.0 + P2_LIMIT_OFFSET;
        Exponent { p, q: p / (p - 1.0) }
    }

    pub fn p(self) -> f64 {
        self.p
    }

    pub fn q(self) -> f64 {
        self.q
    }

    pub fn is_p2_limit(self) -> bool {
        self.p - 2.0 <= 10.0 * P2_LIMIT_OFFSET
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid_argument(format!(
            "vector length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Scalar `|a|^{p-2} a`.
#[inline]
pub fn power(p: Exponent, a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.abs().powf(p.p - 2.0) * a
    }
}

/// `a ↦ |a|^{p-2} a` for a vector, `|a|` the Euclidean norm.
pub fn power_map(p: Exponent, a: &[f64]) -> Vec<f64> {
    let r = norm(a);
    if r == 0.0 {
        return vec![0.0; a.len()];
    }
    let s = r.powf(p.p - 2.0);
    a.iter().map(|x| s * x).collect()
}

/// `a ↦ |a|^{(p-2)/2} a`.
#[inline]
pub fn half_power_map(p: Exponent, a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.abs().powf(0.5 * (p.p - 2.0)) * a
    }
}

fn half_power_vec(p: Exponent, a: &[f64]) -> Vec<f64> {
    let r = norm(a);
    if r == 0.0 {
        return vec![0.0; a.len()];
    }
    let s = r.powf(0.5 * (p.p - 2.0));
    a.iter().map(|x| s * x).collect()
}

/// `⟨|b|^{p-2}b - |a|^{p-2}a, b - a⟩`, non-negative by monotonicity.
pub fn monotonicity_gap(p: Exponent, a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let pa = power_map(p, a);
    let pb = power_map(p, b);
    Ok(pb
        .iter()
        .zip(&pa)
        .zip(b.iter().zip(a))
        .map(|((pb, pa), (b, a))| (pb - pa) * (b - a))
        .sum())
}

/// Both sides of the three inequalities for one pair `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub p: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `⟨|b|^{p-2}b - |a|^{p-2}a, b - a⟩`
    pub gap: f64,
    /// `(4/p²) ||b|^{(p-2)/2}b - |a|^{(p-2)/2}a|²`
    pub half_power_bound: f64,
    /// `|b|^p - |a|^p - p⟨|b|^{p-2}b, b - a⟩`, should be `≤ 0`.
    pub convexity_slack: f64,
    /// `2^{2-p} |b - a|^p`
    pub strong_bound: f64,
    /// Signed relative slacks; negative means the inequality failed.
    pub half_power_slack: f64,
    pub convexity_rel_slack: f64,
    pub strong_slack: f64,
    pub half_power_ok: bool,
    pub convexity_ok: bool,
    pub strong_ok: bool,
}

impl InequalityReport {
    pub fn all_ok(&self) -> bool {
        self.half_power_ok && self.convexity_ok && self.strong_ok
    }

    /// Smallest of the three relative slacks.
    pub fn worst_slack(&self) -> f64 {
        self.half_power_slack
            .min(self.convexity_rel_slack)
            .min(self.strong_slack)
    }
}

/// `(lhs - rhs) / max(|lhs|, |rhs|)`, zero when both vanish.
fn relative_slack(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs) / scale
    }
}

pub fn check_vector_inequalities(p: Exponent, a: &[f64], b: &[f64]) -> Result<InequalityReport> {
    check_lengths(a, b)?;
    let pe = p.p;
    let gap = monotonicity_gap(p, a, b)?;

    let ha = half_power_vec(p, a);
    let hb = half_power_vec(p, b);
    let hdiff: f64 = hb.iter().zip(&ha).map(|(x, y)| (x - y) * (x - y)).sum();
    let half_power_bound = 4.0 / (pe * pe) * hdiff;

    let pb = power_map(p, b);
    let diff: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let convex_lhs = pe * dot(&pb, &diff);
    let convex_rhs = norm(b).powf(pe) - norm(a).powf(pe);
    let convexity_slack = convex_rhs - convex_lhs;

    let strong_bound = 2f64.powf(2.0 - pe) * norm(&diff).powf(pe);

    let half_power_slack = relative_slack(gap, half_power_bound);
    let convexity_rel_slack = relative_slack(convex_lhs, convex_rhs);
    let strong_slack = relative_slack(gap, strong_bound);

    Ok(InequalityReport {
        p: pe,
        a: a.to_vec(),
        b: b.to_vec(),
        gap,
        half_power_bound,
        convexity_slack,
        strong_bound,
        half_power_slack,
        convexity_rel_slack,
        strong_slack,
        half_power_ok: half_power_slack >= -INEQUALITY_SLACK,
        convexity_ok: convexity_rel_slack >= -INEQUALITY_SLACK,
        strong_ok: strong_slack >= -INEQUALITY_SLACK,
    })
}

/// Outcome of checking many `(a, b)` pairs for one exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub p: f64,
    pub pairs: usize,
    pub violations: usize,
    pub worst_slack: f64,
    /// Index of the pair with the smallest slack.
    pub worst_index: Option<usize>,
}

/// Runs [`check_vector_inequalities`] over every pair, in parallel when
/// `exec` allows.
pub fn sweep_inequalities(p: Exponent, pairs: &[(Vec<f64>, Vec<f64>)], exec: Execution) -> Result<SweepSummary> {
    let reports = crate::exec::map_slice(exec, pairs, |(a, b)| check_vector_inequalities(p, a, b));
    let mut summary = SweepSummary {
        p: p.p,
        pairs: pairs.len(),
        violations: 0,
        worst_slack: f64::INFINITY,
        worst_index: None,
    };
    for (i, r) in reports.into_iter().enumerate() {
        let r = r?;
        if !r.all_ok() {
            summary.violations += 1;
        }
        if r.worst_slack() < summary.worst_slack {
            summary.worst_slack = r.worst_slack();
            summary.worst_index = Some(i);
        }
    }
    Ok(summary)
}

/// Largest defect of the discrete chain rule
/// `Δ(|u|^{p-2}u) ≈ (2(p-1)/p) |u|^{(p-2)/2} Δ(|u|^{(p-2)/2}u)`
/// over a sampled path, `Δ` the backward difference with step `h`.
pub fn chain_rule_identity_residual(p: Exponent, u: &[f64], h: f64) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::invalid_argument(
            "chain rule residual needs at least two samples",
        ));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid_argument("step h must be positive"));
    }
    let c = 2.0 * (p.p - 1.0) / p.p;
    let res = u
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0], w[1]);
            let d_power = (power(p, cur) - power(p, prev)) / h;
            let d_half = (half_power_map(p, cur) - half_power_map(p, prev)) / h;
            let weight = cur.abs().powf(0.5 * (p.p - 2.0));
            (d_power - c * weight * d_half).abs()
        })
        .fold(0.0, f64::max);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(p: f64) -> Exponent {
        Exponent::new(p).unwrap()
    }

    #[test]
    fn exponent_validation() {
        assert!(Exponent::new(2.0).is_err());
        assert!(Exponent::new(1.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
        let e = ex(3.0);
        assert!((1.0 / e.p() + 1.0 / e.q() - 1.0).abs() < 1e-14);
        assert!(Exponent::p2_limit().is_p2_limit());
        assert!(!e.is_p2_limit());
    }

    #[test]
    fn power_map_examples() {
        assert_eq!(power_map(ex(3.0), &[2.0]), vec![4.0]);
        assert_eq!(power_map(ex(4.0), &[-2.0]), vec![-8.0]);
        assert_eq!(power_map(ex(2.5), &[0.0]), vec![0.0]);
        // vector case scales by |a|^{p-2}
        let v = power_map(ex(3.0), &[3.0, 4.0]);
        assert!((v[0] - 15.0).abs() < 1e-12 && (v[1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn half_power_examples() {
        assert!((half_power_map(ex(4.0), 3.0) - 9.0).abs() < 1e-12);
        assert!((half_power_map(ex(4.0), -3.0) + 9.0).abs() < 1e-12);
        for p in [2.5, 3.0, 7.0] {
            assert_eq!(half_power_map(ex(p), 1.0), 1.0);
        }
    }

    #[test]
    fn monotonicity_gap_examples() {
        assert_eq!(monotonicity_gap(ex(3.0), &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let g = monotonicity_gap(Exponent::p2_limit(), &[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((g - 25.0).abs() < 1e-9);
        assert_eq!(monotonicity_gap(ex(4.0), &[0.0], &[1.0]).unwrap(), 1.0);
        assert!(monotonicity_gap(ex(3.0), &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn inequality_examples() {
        let r = check_vector_inequalities(ex(3.0), &[0.5, -1.0], &[0.5, -1.0]).unwrap();
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.half_power_bound, 0.0);
        assert_eq!(r.strong_bound, 0.0);
        assert!(r.all_ok());

        let r = check_vector_inequalities(ex(4.0), &[0.0], &[1.0]).unwrap();
        assert_eq!(r.gap, 1.0);
        assert!((r.half_power_bound - 0.25).abs() < 1e-15);
        assert!((r.strong_bound - 0.25).abs() < 1e-15);
        assert!(r.all_ok());
        assert!(check_vector_inequalities(ex(4.0), &[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn chain_rule_examples() {
        let p = ex(3.0);
        assert_eq!(chain_rule_identity_residual(p, &[1.7; 10], 0.1).unwrap(), 0.0);
        assert_eq!(chain_rule_identity_residual(p, &[0.0; 10], 0.1).unwrap(), 0.0);
        assert!(chain_rule_identity_residual(p, &[1.0], 0.1).is_err());
    }

    #[test]
    fn chain_rule_residual_is_first_order() {
        // For u(t) = t and p = 3, a Taylor expansion of both differences
        // gives a defect of h/2 + O(h²) at every sample.
        let p = ex(3.0);
        for k in 4..9 {
            let n = 1usize << k;
            let h = 1.0 / n as f64;
            let u: Vec<f64> = (0..=n).map(|i| 1.0 + i as f64 * h).collect();
            let r = chain_rule_identity_residual(p, &u, h).unwrap();
            assert!((r / h - 0.5).abs() < 0.05, "h = {h}: residual/h = {}", r / h);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn maps_are_odd_and_monotone(p in 2.01f64..8.0, x in -10.0f64..10.0, d in 1e-6f64..5.0) {
            let e = ex(p);
            let y = x + d;
            prop_assert!(power(e, x) < power(e, y));
            prop_assert!(half_power_map(e, x) < half_power_map(e, y));
            prop_assert_eq!(power(e, -x), -power(e, x));
            prop_assert_eq!(half_power_map(e, -x), -half_power_map(e, x));
        }

        #[test]
        fn half_power_squares_to_p_power(p in 2.01f64..8.0, a in -10.0f64..10.0) {
            let e = ex(p);
            let lhs = half_power_map(e, a).powi(2);
            let rhs = a.abs().powf(p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn gap_is_symmetric(p in 2.01f64..6.0,
                            a in prop::collection::vec(-5.0f64..5.0, 3),
                            b in prop::collection::vec(-5.0f64..5.0, 3)) {
            let e = ex(p);
            prop_assert_eq!(monotonicity_gap(e, &a, &b).unwrap(), monotonicity_gap(e, &b, &a).unwrap());
        }

        #[test]
        fn inequalities_hold(p in prop::sample::select(vec![2.5, 3.0, 4.0]),
                             a in prop::collection::vec(-3.0f64..3.0, 1..=3),
                             shift in prop::collection::vec(-3.0f64..3.0, 3)) {
            let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
            let r = check_vector_inequalities(ex(p), &a, &b).unwrap();
            prop_assert!(r.all_ok(), "{:?}", r);
        }
    }
}

//! Frostman inequalities, support descriptions and the invariant suite.

mod suite;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::PointCloud;
use crate::green::{green_potential_at, GreenOperator};
use crate::kernel::DiscreteMeasure;
use crate::linalg::Vector;
use crate::problems::{ConstraintSpec, ExternalField};

pub use suite::{run_invariant_suite, Fault, LedgerEntry, SuiteOptions, SuiteSize};

/// Weights above this fraction of the mass are treated as charged.
pub const SUPPORT_TOL: f64 = 1e-8;
/// Quadrature weight that nearly-everywhere statements may ignore.
pub const EXCEPTIONAL_BUDGET: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrostmanMode {
    Constrained,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostmanResidual {
    pub w: f64,
    /// `max(0, w − W)` over the checked nodes, exceptional set removed.
    pub lower_violation: f64,
    /// `max(0, W − w)` over the support.
    pub upper_violation: f64,
    pub lower_nodes: Vec<usize>,
    pub exceptional: Vec<usize>,
    pub support: Vec<usize>,
}

impl FrostmanResidual {
    pub fn max_violation(&self) -> f64 {
        self.lower_violation.max(self.upper_violation)
    }

    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_violation() <= rel_tol * self.w.abs()
    }
}

/// `W = Gλ + f` at every local node; `+∞` where `f` is.
pub fn weighted_potential(g: &GreenOperator, lambda: &[f64], field: &ExternalField) -> Vec<f64> {
    let u = g.matrix() * Vector::from_column_slice(lambda);
    u.iter().zip(&field.values).map(|(u, f)| if f.is_finite() { u + f } else { f64::INFINITY }).collect()
}

/// Frostman residuals of `lambda` for the Green problem.
pub fn frostman_check(lambda: &[f64], field: &ExternalField, constraint: &ConstraintSpec, g: &GreenOperator, mode: FrostmanMode) -> FrostmanResidual {
    let w = weighted_potential(g, lambda, field);
    let caps = match mode {
        FrostmanMode::Constrained => constraint.caps(),
        FrostmanMode::Unconstrained => None,
    };
    frostman_check_values(&w, lambda, caps, &g.quad_weights, EXCEPTIONAL_BUDGET)
}

/// Frostman residuals from precomputed weighted potentials.
///
/// Without caps `w = ⟨W, λ⟩/λ(F)`. With caps, `w` is the median of `W` over
/// nodes that are charged and not saturated; if there are none, the midpoint
/// of the interval allowed by the two inequalities.
pub fn frostman_check_values(potential: &[f64], lambda: &[f64], caps: Option<&[f64]>, quad: &[f64], budget: f64) -> FrostmanResidual {
    let mass: f64 = lambda.iter().sum();
    let thr = SUPPORT_TOL * mass.max(f64::MIN_POSITIVE);
    let support: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > thr).collect();
    let lower_nodes: Vec<usize> = match caps {
        Some(u) => (0..lambda.len()).filter(|&i| u[i] - lambda[i] > thr).collect(),
        None => (0..lambda.len()).collect(),
    };
    let w = match caps {
        None => support.iter().map(|&i| potential[i] * lambda[i]).sum::<f64>() / mass,
        Some(u) => {
            let mut free: Vec<f64> = support.iter().filter(|&&i| u[i] - lambda[i] > thr).map(|&i| potential[i]).collect();
            if free.is_empty() {
                let hi = lower_nodes.iter().map(|&i| potential[i]).fold(f64::INFINITY, f64::min);
                let lo = support.iter().map(|&i| potential[i]).fold(f64::NEG_INFINITY, f64::max);
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => lo,
                    (false, true) => hi,
                    (false, false) => 0.0,
                }
            } else {
                free.sort_by(f64::total_cmp);
                let m = free.len();
                if m % 2 == 1 { free[m / 2] } else { 0.5 * (free[m / 2 - 1] + free[m / 2]) }
            }
        }
    };

    let mut lows: Vec<(usize, f64)> = lower_nodes.iter().map(|&i| (i, (w - potential[i]).max(0.0))).filter(|&(_, v)| v > 0.0).collect();
    lows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total_quad: f64 = quad.iter().sum();
    let allowance = budget * total_quad;
    let mut used = 0.0;
    let mut exceptional = Vec::new();
    let mut lower_violation = 0.0;
    for &(i, v) in &lows {
        if used + quad[i] <= allowance {
            used += quad[i];
            exceptional.push(i);
        } else {
            lower_violation = v;
            break;
        }
    }
    exceptional.sort_unstable();
    let upper_violation = support.iter().map(|&i| (potential[i] - w).max(0.0)).fold(0.0, f64::max);
    FrostmanResidual {
        w,
        lower_violation,
        upper_violation,
        lower_nodes,
        exceptional,
        support,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    /// Quadrature weight of charged nodes over the total quadrature weight.
    pub support_fraction: f64,
    /// Mass carried by boundary-classified nodes over the total mass.
    pub boundary_fraction: f64,
}

pub fn support_check(lambda: &[f64], quad: &[f64], boundary: &[bool]) -> SupportReport {
    let mass: f64 = lambda.iter().sum();
    let thr = SUPPORT_TOL * mass;
    let total_quad: f64 = quad.iter().sum();
    let charged: f64 = (0..lambda.len()).filter(|&i| lambda[i] > thr).fold(0.0, |s, i| s + quad[i]);
    let on_boundary: f64 = (0..lambda.len()).filter(|&i| boundary.get(i).copied().unwrap_or(false)).fold(0.0, |s, i| s + lambda[i]);
    SupportReport {
        support_fraction: if total_quad > 0.0 { charged / total_quad } else { 0.0 },
        boundary_fraction: if mass > 0.0 { on_boundary / mass } else { 0.0 },
    }
}

/// `w − max U_g^λ` over the probe points.
pub fn strict_inequality_probe(cloud: &PointCloud, alpha: f64, lambda: &DiscreteMeasure, beta: &DiscreteMeasure, probes: &[Vec<f64>], w: f64) -> Result<f64> {
    let u = green_potential_at(cloud, alpha, lambda, beta, probes)?;
    Ok(w - u.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_potential_has_no_violation() {
        let r = frostman_check_values(&[2.0; 4], &[0.25; 4], None, &[1.0; 4], EXCEPTIONAL_BUDGET);
        assert_eq!(r.w, 2.0);
        assert_eq!(r.max_violation(), 0.0);
        assert_eq!(r.support.len(), 4);
    }

    #[test]
    fn exceptional_budget_absorbs_light_nodes() {
        let mut quad = vec![1.0; 2000];
        quad[7] = 1.0;
        let mut pot = vec![1.0; 2000];
        pot[7] = 0.5;
        let lambda = vec![1.0 / 2000.0; 2000];
        let r = frostman_check_values(&pot, &lambda, None, &quad, EXCEPTIONAL_BUDGET);
        assert_eq!(r.exceptional, vec![7]);
        assert_eq!(r.lower_violation, 0.0);
        let r0 = frostman_check_values(&pot, &lambda, None, &quad, 0.0);
        assert!(r0.lower_violation > 0.4);
    }

    #[test]
    fn constrained_w_from_free_nodes() {
        // Node 0 saturated with a low potential, nodes 1..3 free at 1, node 3 empty above.
        let pot = [0.5, 1.0, 1.0, 1.5];
        let lambda = [0.4, 0.3, 0.3, 0.0];
        let caps = [0.4, 1.0, 1.0, 1.0];
        let r = frostman_check_values(&pot, &lambda, Some(&caps), &[1.0; 4], 0.0);
        assert_eq!(r.w, 1.0);
        assert_eq!(r.max_violation(), 0.0);
        assert_eq!(r.lower_nodes, vec![1, 2, 3]);
    }

    #[test]
    fn support_fractions() {
        let s = support_check(&[1.0], &[0.3], &[false]);
        assert_eq!(s.support_fraction, 1.0);
        let s = support_check(&[0.5, 0.5, 0.0], &[1.0, 1.0, 2.0], &[true, false, true]);
        assert_eq!(s.support_fraction, 0.5);
        assert_eq!(s.boundary_fraction, 0.5);
    }
}

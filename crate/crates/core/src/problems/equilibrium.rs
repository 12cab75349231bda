use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{green_capacity, GreenOperator};
use crate::linalg::{self, Vector};
use crate::qp::QpOptions;
use crate::verify::SUPPORT_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Equilibrium weights over the requested local nodes, in that order.
    pub gamma: Vec<f64>,
    pub capacity: f64,
    /// `|γ(E) − C|`.
    pub mass_residual: f64,
    /// `max(0, 1 − U^γ)` over `E` outside the exceptional set.
    pub lower_violation: f64,
    /// `max(0, U^γ − 1)` over the support.
    pub upper_violation: f64,
}

impl Equilibrium {
    pub fn passes(&self, pot_tol: f64) -> bool {
        self.mass_residual <= 1e-10 && self.lower_violation <= pot_tol && self.upper_violation <= pot_tol
    }
}

/// `γ = λ/w` from the unit-mass minimizer `λ` with `w = λᵀGλ`.
pub fn equilibrium_measure(g: &GreenOperator, e_nodes: &[usize], budget: f64, opts: &QpOptions) -> Result<Equilibrium> {
    if e_nodes.is_empty() {
        return Err(Error::InvalidGeometry("equilibrium of an empty node set".into()));
    }
    let cap = green_capacity(g, e_nodes, opts)?;
    let w = 1.0 / cap.value;
    let gamma: Vec<f64> = cap.weights.iter().map(|v| v / w).collect();
    let mass: f64 = gamma.iter().sum();
    let g_ee = linalg::principal(g.matrix(), e_nodes);
    let u = &g_ee * Vector::from_column_slice(&gamma);
    let quad: Vec<f64> = e_nodes.iter().map(|&i| g.quad_weights[i]).collect();
    let thr = SUPPORT_TOL * mass;
    let upper = (0..gamma.len()).filter(|&i| gamma[i] > thr).map(|i| (u[i] - 1.0).max(0.0)).fold(0.0, f64::max);
    // Lower bound holds outside an exceptional set of small quadrature weight.
    let mut lows: Vec<(usize, f64)> = (0..gamma.len()).map(|i| (i, (1.0 - u[i]).max(0.0))).filter(|p| p.1 > 0.0).collect();
    lows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let allowance = budget * quad.iter().sum::<f64>();
    let mut used = 0.0;
    let mut lower = 0.0;
    for (i, v) in lows {
        if used + quad[i] <= allowance {
            used += quad[i];
        } else {
            lower = v;
            break;
        }
    }
    Ok(Equilibrium {
        mass_residual: (mass - cap.value).abs(),
        capacity: cap.value,
        gamma,
        lower_violation: lower,
        upper_violation: upper,
    })
}

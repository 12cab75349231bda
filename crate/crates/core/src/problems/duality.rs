use serde::{Deserialize, Serialize};

use super::{solve_green_problem, solve_green_problem_from, ConstraintSpec, ExternalField, FieldCase, SolveOptions};
use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::linalg::{self, Vector};
use crate::verify::SUPPORT_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `1/(ξ(F) − 1)`.
    pub q: f64,
    /// Frostman constant of the unweighted constrained problem.
    pub w_prime: f64,
    pub lambda0: Vec<f64>,
    pub theta: Vec<f64>,
    pub checks: Vec<DualityCheck>,
}

impl DualityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Turns the `ξ`-constrained unweighted minimizer `λ₀` into
/// `θ = q(ξ − λ₀)` and checks that `θ` solves both the `qξ`-constrained and
/// the unconstrained problems with field `f = −q·Gξ`.
pub fn duality_experiment(g: &GreenOperator, xi: &[f64], opts: &SolveOptions) -> Result<DualityReport> {
    let n = g.size();
    if xi.len() != n {
        return Err(Error::CloudMismatch("constraint does not match F".into()));
    }
    let xi_mass: f64 = xi.iter().sum();
    if xi_mass <= 1.0 {
        return Err(Error::Infeasible(format!("constraint mass {xi_mass} does not exceed 1")));
    }
    let constraint = ConstraintSpec::Measure { xi: xi.to_vec() };
    let base = solve_green_problem(g, &ExternalField::zero(n), &constraint, opts)?;
    let lambda0 = base.lambda(&g.f_nodes);
    let w_prime = base.frostman_w;
    let q = 1.0 / (xi_mass - 1.0);
    let theta: Vec<f64> = xi.iter().zip(&lambda0).map(|(x, l)| q * (x - l)).collect();

    let g_xi = g.matrix() * Vector::from_column_slice(xi);
    let field = ExternalField {
        case: FieldCase::CaseII,
        values: g_xi.iter().map(|v| -q * v).collect(),
        zeta: None,
    };
    let objective = |w: &[f64]| linalg::dot(w, (g.matrix() * Vector::from_column_slice(w)).as_slice()) + 2.0 * linalg::dot(&field.values, w);

    let mut checks = Vec::new();
    let mut check = |name: &str, value: f64, limit: f64| {
        checks.push(DualityCheck {
            name: name.to_string(),
            value,
            limit,
            passed: value <= limit,
        })
    };

    let neg = theta.iter().fold(0.0f64, |m, &t| m.max(-t));
    let over = theta.iter().zip(xi).fold(0.0f64, |m, (&t, &x)| m.max(t - q * x));
    check("theta_nonnegative", neg, 1e-10);
    check("theta_below_q_xi", over, 1e-10);
    check("theta_unit_mass", (theta.iter().sum::<f64>() - 1.0).abs(), 1e-10);

    let capped = ConstraintSpec::Measure {
        xi: xi.iter().map(|x| q * x).collect(),
    };
    let theta_obj = objective(&theta);
    for (name, c) in [("capped", &capped), ("unconstrained", &ConstraintSpec::Unconstrained)] {
        let r = solve_green_problem_from(g, &field, c, None, opts)?;
        let w = r.lambda(&g.f_nodes);
        let rel = (objective(&w) - theta_obj).abs() / theta_obj.abs().max(f64::MIN_POSITIVE);
        check(&format!("{name}_objective_match"), rel, 1e-6);
        check(&format!("{name}_minimizer_l1"), linalg::l1_distance(&w, &theta), 1e-4);
    }

    // W_θ = −q·w′ on the support of θ and ≥ −q·w′ elsewhere.
    let u = g.matrix() * Vector::from_column_slice(&theta);
    let w_theta: Vec<f64> = u.iter().zip(&field.values).map(|(a, b)| a + b).collect();
    let target = -q * w_prime;
    let thr = SUPPORT_TOL;
    let on_support = (0..n).filter(|&i| theta[i] > thr).map(|i| (w_theta[i] - target).abs()).fold(0.0, f64::max);
    let below = (0..n).map(|i| (target - w_theta[i]).max(0.0)).fold(0.0, f64::max);
    let limit = opts.pot_tol * q * w_prime.abs();
    check("support_equality", on_support, limit);
    check("lower_bound", below, limit);

    Ok(DualityReport {
        q,
        w_prime,
        lambda0,
        theta,
        checks,
    })
}

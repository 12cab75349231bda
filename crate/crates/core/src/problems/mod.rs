//! Weighted minimum energy problems on the condenser, through the Green
//! kernel and directly on the Riesz side.

mod duality;
mod equilibrium;
mod probe;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::balayage::{balayage, BalayageColumns};
use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, PointCloud};
use crate::green::GreenOperator;
use crate::kernel::{riesz_kernel, DiscreteMeasure, KernelOperator};
use crate::linalg::{self, Vector};
use crate::qp::{self, NonnegSolver, QpOptions, QpProblem, TwoBlockProblem};
use crate::verify::{frostman_check_values, support_check, weighted_potential, FrostmanMode, FrostmanResidual, EXCEPTIONAL_BUDGET};

pub use duality::{duality_experiment, DualityCheck, DualityReport};
pub use equilibrium::{equilibrium_measure, Equilibrium};
pub use probe::{annuli_measures, annuli_probe, AnnuliProbe};

/// Largest recovered negative-plate deficit that may be renormalized away.
pub const DEFAULT_RENORM_TOL: f64 = 0.02;
pub const DEFAULT_POT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldCase {
    CaseI,
    CaseII,
    Zero,
}

/// A signed measure as a pair of nonnegative parts over one index space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub plus: DiscreteMeasure,
    pub minus: DiscreteMeasure,
}

impl SignedMeasure {
    pub fn positive(plus: DiscreteMeasure) -> Self {
        let minus = DiscreteMeasure::zero(plus.space());
        SignedMeasure { plus, minus }
    }

    pub fn is_zero(&self) -> bool {
        self.plus.total_mass() == 0.0 && self.minus.total_mass() == 0.0
    }
}

/// External field sampled at the `F` nodes (local order of the Green operator).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalField {
    pub case: FieldCase,
    /// `+∞` marks nodes outside `F₀`.
    pub values: Vec<f64>,
    /// Source of a Case II field.
    pub zeta: Option<SignedMeasure>,
}

impl ExternalField {
    pub fn zero(n: usize) -> Self {
        ExternalField {
            case: FieldCase::Zero,
            values: vec![0.0; n],
            zeta: None,
        }
    }

    /// Case I samples. Lower semicontinuity is the caller's declaration.
    pub fn case_i(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidNode {
                index: i,
                reason: "field value must be a real number or +inf".into(),
            });
        }
        Ok(ExternalField {
            case: FieldCase::CaseI,
            values,
            zeta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Local nodes where the field is finite.
    pub fn f0_mask(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i].is_finite()).collect()
    }
}

/// Case II field `U^ζ − U^{βζ}` at the `F` nodes.
pub fn field_case_ii(zeta: &SignedMeasure, k: &KernelOperator, cols: &BalayageColumns) -> Result<ExternalField> {
    let q = &cols.q_nodes;
    for m in [&zeta.plus, &zeta.minus] {
        if let Some(&i) = m.node_indices().iter().find(|i| q.contains(i)) {
            return Err(Error::FieldOnComplement(i));
        }
    }
    let mut values = vec![0.0; cols.f_nodes.len()];
    for (m, sign) in [(&zeta.plus, 1.0), (&zeta.minus, -1.0)] {
        if m.total_mass() == 0.0 {
            continue;
        }
        let swept = balayage(m, k, q)?.measure;
        let u = k.potential(m, &cols.f_nodes)?;
        let ub = k.potential(&swept, &cols.f_nodes)?;
        for (v, (a, b)) in values.iter_mut().zip(u.iter().zip(&ub)) {
            *v += sign * (a - b);
        }
    }
    Ok(ExternalField {
        case: FieldCase::CaseII,
        values,
        zeta: Some(zeta.clone()),
    })
}

/// Atom of a Case II source placed at an arbitrary point of `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub at: Vec<f64>,
    pub weight: f64,
}

/// Case II field of point sources off the node set: `U^ζ − U^{βζ}` at the
/// `F` nodes, with each atom swept onto `cols.q_nodes`. Also returns the
/// swept weights of every atom over `cols.q_nodes`.
pub fn field_point_sources(cloud: &PointCloud, domain: &DomainSpec, k: &KernelOperator, cols: &BalayageColumns, sources: &[PointSource]) -> Result<(ExternalField, Vec<Vec<f64>>)> {
    let (f, q) = (&cols.f_nodes, &cols.q_nodes);
    let (alpha, dim) = (k.alpha(), k.dim());
    let mut values = vec![0.0; f.len()];
    let mut swept_all = Vec::with_capacity(sources.len());
    let solver = if sources.is_empty() { None } else { Some(NonnegSolver::new(linalg::principal(k.matrix(), q))?) };
    for (s, src) in sources.iter().enumerate() {
        if src.at.len() != dim || !domain.contains(&src.at) {
            return Err(Error::InvalidGeometry(format!("source {s} at {:?} is not a point of D", src.at)));
        }
        let rhs: Vec<f64> = q.iter().map(|&j| riesz_kernel(&src.at, cloud.point(j), alpha, dim)).collect::<Result<_>>()?;
        let swept = solver.as_ref().expect("solver built for nonempty sources").solve(&rhs)?.x;
        for (v, &i) in values.iter_mut().zip(f) {
            let direct = riesz_kernel(&src.at, cloud.point(i), alpha, dim)?;
            let image: f64 = q.iter().zip(&swept).map(|(&j, &b)| b * k.entry(j, i)).sum();
            *v += src.weight * (direct - image);
        }
        swept_all.push(swept);
    }
    let field = ExternalField {
        case: if sources.is_empty() { FieldCase::Zero } else { FieldCase::CaseII },
        values,
        zeta: None,
    };
    Ok((field, swept_all))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    Unconstrained,
    /// Upper bound `ξ` over the local `F` nodes.
    Measure { xi: Vec<f64> },
}

impl ConstraintSpec {
    pub fn caps(&self) -> Option<&[f64]> {
        match self {
            ConstraintSpec::Unconstrained => None,
            ConstraintSpec::Measure { xi } => Some(xi),
        }
    }

    pub fn mode(&self) -> FrostmanMode {
        match self {
            ConstraintSpec::Unconstrained => FrostmanMode::Unconstrained,
            ConstraintSpec::Measure { .. } => FrostmanMode::Constrained,
        }
    }

    /// Finite Green energy of `ξ`; always true for atomic constraints but
    /// evaluated so that overflow is caught.
    pub fn admissible(&self, g: &GreenOperator) -> bool {
        match self {
            ConstraintSpec::Unconstrained => false,
            ConstraintSpec::Measure { xi } => g.energy_of(xi).is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preflight {
    pub feasible: bool,
    pub reason: String,
}

pub fn preflight(field: &ExternalField, constraint: &ConstraintSpec) -> Preflight {
    let f0 = field.f0_mask();
    let verdict = |feasible: bool, reason: String| Preflight { feasible, reason };
    match constraint {
        ConstraintSpec::Unconstrained if field.case == FieldCase::CaseII => verdict(true, "Case II fields are finite on F".into()),
        ConstraintSpec::Unconstrained if f0.is_empty() => verdict(false, "field is +inf at every node".into()),
        ConstraintSpec::Unconstrained => verdict(true, format!("{} nodes with finite field", f0.len())),
        ConstraintSpec::Measure { xi } => {
            if xi.len() != field.len() {
                return verdict(false, format!("constraint over {} nodes, field over {}", xi.len(), field.len()));
            }
            let mass: f64 = f0.iter().map(|&i| xi[i]).sum();
            if mass > 1.0 {
                verdict(true, format!("constraint mass {mass} on F0"))
            } else {
                verdict(false, format!("constraint mass {mass} on F0 does not exceed 1"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub qp: QpOptions,
    pub pot_tol: f64,
    pub renorm_tol: f64,
    pub exceptional_budget: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            qp: QpOptions::default(),
            pot_tol: DEFAULT_POT_TOL,
            renorm_tol: DEFAULT_RENORM_TOL,
            exceptional_budget: EXCEPTIONAL_BUDGET,
        }
    }
}

/// Positive part on `F`, negative part on the complement nodes, both over
/// the cloud index space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedCondenserMeasure {
    pub plus: DiscreteMeasure,
    pub minus: DiscreteMeasure,
}

impl SignedCondenserMeasure {
    pub fn mass_error(&self) -> f64 {
        (self.plus.total_mass() - 1.0).abs().max((self.minus.total_mass() - 1.0).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Green,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Minimizer {
    /// Weights over the local `F` nodes.
    Green { f_nodes: Vec<usize>, weights: Vec<f64> },
    Condenser(SignedCondenserMeasure),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub kkt: f64,
    pub frostman_lower_violation: f64,
    pub frostman_upper_violation: f64,
    pub duality_gap: f64,
    pub support_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub timings: BTreeMap<String, f64>,
    pub truncation_radius: Option<f64>,
    /// Equality multipliers in gradient units.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub route: Route,
    pub minimizer: Minimizer,
    pub objective: f64,
    pub frostman_w: f64,
    pub residuals: Residuals,
    pub diagnostics: Diagnostics,
}

impl SolveReport {
    /// Positive-plate weights over `f_nodes`, in that order.
    pub fn lambda(&self, f_nodes: &[usize]) -> Vec<f64> {
        match &self.minimizer {
            Minimizer::Green { f_nodes: own, weights } if own.as_slice() == f_nodes => weights.clone(),
            Minimizer::Green { f_nodes: own, weights } => {
                f_nodes.iter().map(|i| own.iter().position(|j| j == i).map_or(0.0, |k| weights[k])).collect()
            }
            Minimizer::Condenser(m) => m.plus.gather(f_nodes),
        }
    }

    pub fn frostman_passes(&self, rel_tol: f64) -> bool {
        let r = &self.residuals;
        r.frostman_lower_violation.max(r.frostman_upper_violation) <= rel_tol * self.frostman_w.abs()
    }
}

/// `|a − b| / max(1, |a|)`.
pub fn duality_gap(direct: f64, green: f64) -> f64 {
    (direct - green).abs() / direct.abs().max(1.0)
}

fn scatter(n: usize, idx: &[usize], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&i, &v) in idx.iter().zip(values) {
        out[i] = v;
    }
    out
}

fn restrict_caps(constraint: &ConstraintSpec, f0: &[usize]) -> Option<Vec<f64>> {
    constraint.caps().map(|u| f0.iter().map(|&i| u[i]).collect())
}

pub fn solve_green_problem(g: &GreenOperator, field: &ExternalField, constraint: &ConstraintSpec, opts: &SolveOptions) -> Result<SolveReport> {
    solve_green_problem_from(g, field, constraint, None, opts)
}

/// Minimizes `νᵀGν + 2⟨f, ν⟩` over unit-mass `ν ≤ ξ` on `F₀`.
pub fn solve_green_problem_from(g: &GreenOperator, field: &ExternalField, constraint: &ConstraintSpec, start: Option<&[f64]>, opts: &SolveOptions) -> Result<SolveReport> {
    let n = g.size();
    if field.len() != n {
        return Err(Error::CloudMismatch(format!("field over {} nodes, Green operator over {n}", field.len())));
    }
    let verdict = preflight(field, constraint);
    if !verdict.feasible {
        return Err(Error::Infeasible(verdict.reason));
    }
    let t0 = Instant::now();
    let f0 = field.f0_mask();
    let problem = QpProblem::new(
        linalg::principal(g.matrix(), &f0),
        f0.iter().map(|&i| field.values[i]).collect(),
        1.0,
        restrict_caps(constraint, &f0),
    )?;
    let start0: Option<Vec<f64>> = start.map(|s| f0.iter().map(|&i| s[i]).collect());
    let sol = qp::solve(&problem, start0.as_deref(), &opts.qp)?;
    let lambda = scatter(n, &f0, &sol.weights);
    let solve_time = t0.elapsed().as_secs_f64();

    let w = weighted_potential(g, &lambda, field);
    let frostman = frostman_check_values(&w, &lambda, constraint.caps(), &g.quad_weights, opts.exceptional_budget);
    let support = support_check(&lambda, &g.quad_weights, &[]);
    let mut timings = BTreeMap::new();
    timings.insert("solve".to_string(), solve_time);
    Ok(SolveReport {
        route: Route::Green,
        minimizer: Minimizer::Green {
            f_nodes: g.f_nodes.clone(),
            weights: lambda,
        },
        objective: sol.objective,
        frostman_w: frostman.w,
        residuals: Residuals {
            kkt: sol.kkt_residual,
            frostman_lower_violation: frostman.lower_violation,
            frostman_upper_violation: frostman.upper_violation,
            duality_gap: 0.0,
            support_fraction: support.support_fraction,
        },
        diagnostics: Diagnostics {
            iterations: sol.iterations,
            timings,
            truncation_radius: None,
            multipliers: vec![sol.multiplier],
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub measure: SignedCondenserMeasure,
    /// `1 − (Bλ)(Q)` before renormalization.
    pub mass_deficit: f64,
    pub renormalized: bool,
}

/// `λ_A = λ_F − βλ_F`, with the swept part renormalized to unit mass.
pub fn recover_condenser(lambda: &[f64], cols: &BalayageColumns, space: usize, renorm_tol: f64) -> Result<Recovery> {
    if lambda.len() != cols.f_nodes.len() {
        return Err(Error::CloudMismatch("λ does not match the balayage columns".into()));
    }
    let minus = cols.apply(lambda);
    let mass: f64 = minus.iter().sum();
    let lambda_mass: f64 = lambda.iter().sum();
    let mass_deficit = lambda_mass - mass;
    if mass_deficit >= renorm_tol {
        return Err(Error::MassDeficit {
            deficit: mass_deficit,
            tol: renorm_tol,
        });
    }
    let renormalized = mass_deficit != 0.0;
    let minus: Vec<f64> = minus.iter().map(|v| v * lambda_mass / mass).collect();
    Ok(Recovery {
        measure: SignedCondenserMeasure {
            plus: DiscreteMeasure::on_nodes(space, &cols.f_nodes, lambda)?,
            minus: DiscreteMeasure::on_nodes(space, &cols.q_nodes, &minus)?,
        },
        mass_deficit,
        renormalized,
    })
}

/// Riesz operator together with the plate node sets.
#[derive(Debug, Clone, Copy)]
pub struct CondenserBlocks<'a> {
    pub k: &'a KernelOperator,
    pub f_nodes: &'a [usize],
    pub q_nodes: &'a [usize],
    /// Quadrature weights of `f_nodes`.
    pub quad_f: &'a [f64],
}

/// Minimizes `‖μ⁺ − μ⁻‖² + 2⟨f, μ⁺⟩` over unit-mass `μ⁺ ≤ ξ` on `F₀` and
/// unit-mass `μ⁻` on the complement nodes. `start` is `(λ over F, μ⁻ over Q)`.
pub fn solve_condenser_direct(
    blocks: CondenserBlocks<'_>,
    field: &ExternalField,
    constraint: &ConstraintSpec,
    start: Option<(&[f64], &[f64])>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let CondenserBlocks { k, f_nodes, q_nodes, quad_f } = blocks;
    let n = f_nodes.len();
    if field.len() != n || quad_f.len() != n {
        return Err(Error::CloudMismatch("field or quadrature does not match F".into()));
    }
    let verdict = preflight(field, constraint);
    if !verdict.feasible {
        return Err(Error::Infeasible(verdict.reason));
    }
    let t0 = Instant::now();
    let f0 = field.f0_mask();
    let p: Vec<usize> = f0.iter().map(|&i| f_nodes[i]).collect();
    let problem = TwoBlockProblem {
        k_pp: linalg::principal(k.matrix(), &p),
        k_pq: linalg::block(k.matrix(), &p, q_nodes),
        k_qq: linalg::principal(k.matrix(), q_nodes),
        c_p: f0.iter().map(|&i| field.values[i]).collect(),
        caps_p: restrict_caps(constraint, &f0),
    };
    let start_p: Option<Vec<f64>> = start.map(|(s, _)| f0.iter().map(|&i| s[i]).collect());
    let start_pair = match (&start_p, start) {
        (Some(sp), Some((_, sq))) => Some((sp.as_slice(), sq)),
        _ => None,
    };
    let sol = qp::solve_two_block(&problem, start_pair, &opts.qp)?;
    let solve_time = t0.elapsed().as_secs_f64();
    let plus = scatter(n, &f0, &sol.plus);

    // Riesz-side weighted potential on F.
    let mut signed = vec![0.0; k.size()];
    for (&i, &v) in f_nodes.iter().zip(&plus) {
        signed[i] += v;
    }
    for (&i, &v) in q_nodes.iter().zip(&sol.minus) {
        signed[i] -= v;
    }
    let u = k.matrix() * Vector::from_column_slice(&signed);
    let w_alpha: Vec<f64> = (0..n)
        .map(|j| if field.values[j].is_finite() { u[f_nodes[j]] + field.values[j] } else { f64::INFINITY })
        .collect();
    let frostman: FrostmanResidual = frostman_check_values(&w_alpha, &plus, constraint.caps(), quad_f, opts.exceptional_budget);
    let support = support_check(&plus, quad_f, &[]);
    let mut timings = BTreeMap::new();
    timings.insert("solve".to_string(), solve_time);
    Ok(SolveReport {
        route: Route::Direct,
        minimizer: Minimizer::Condenser(SignedCondenserMeasure {
            plus: DiscreteMeasure::on_nodes(k.size(), f_nodes, &plus)?,
            minus: DiscreteMeasure::on_nodes(k.size(), q_nodes, &sol.minus)?,
        }),
        objective: sol.objective,
        frostman_w: frostman.w,
        residuals: Residuals {
            kkt: sol.kkt_residual,
            frostman_lower_violation: frostman.lower_violation,
            frostman_upper_violation: frostman.upper_violation,
            duality_gap: 0.0,
            support_fraction: support.support_fraction,
        },
        diagnostics: Diagnostics {
            iterations: sol.iterations,
            timings,
            truncation_radius: None,
            multipliers: vec![sol.multipliers.0, sol.multipliers.1],
        },
    })
}

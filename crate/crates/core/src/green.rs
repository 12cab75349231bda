//! Green kernel of the domain composed from the Riesz kernel and balayage.

use std::path::Path;

use log::{info, warn};

use crate::balayage::BalayageColumns;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::kernel::{certify_with_escalation, riesz_value, DiagPolicy, DiscreteMeasure, KernelKind, KernelOperator};
use crate::linalg::{self, Matrix};
use crate::qp::{self, QpOptions, QpProblem, QpSolution};

/// Asymmetry above this fraction of `max|G|` rejects the columns.
pub const ASYMMETRY_LIMIT: f64 = 1e-3;
/// Floor of the corrected diagonal as a fraction of the Riesz self-value.
pub const DIAG_FLOOR: f64 = 0.1;

/// Green operator over the local index space of `f_nodes`.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    pub kernel: KernelOperator,
    /// Cloud index of each local row.
    pub f_nodes: Vec<usize>,
    /// `‖G − Gᵀ‖_max` before symmetrization.
    pub asymmetry: f64,
    /// Diagonal entries raised to the floor.
    pub floored: usize,
    /// Quadrature weights of the `F` nodes (all ones until attached).
    pub quad_weights: Vec<f64>,
}

impl GreenOperator {
    pub fn size(&self) -> usize {
        self.f_nodes.len()
    }

    pub fn matrix(&self) -> &Matrix {
        self.kernel.matrix()
    }

    /// Takes the quadrature weights of `f_nodes` from `cloud`.
    pub fn with_quadrature(mut self, cloud: &PointCloud) -> Self {
        self.quad_weights = self.f_nodes.iter().map(|&i| cloud.quad_weight(i)).collect();
        self
    }

    /// Local measure over `f_nodes` from a cloud measure carried by `F`.
    pub fn localize(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        let w = mu.gather(&self.f_nodes);
        let outside = mu.total_mass() - w.iter().sum::<f64>();
        if outside.abs() > 1e-12 * mu.total_mass().max(1.0) {
            return Err(Error::CloudMismatch("measure charges nodes outside F".into()));
        }
        DiscreteMeasure::from_dense(&w)
    }

    /// `μᵀGμ` for weights in local order.
    pub fn energy_of(&self, w: &[f64]) -> f64 {
        qp::objective(self.matrix(), &vec![0.0; w.len()], w)
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        self.kernel.dump(path)
    }
}

/// `G = K_FF − K_FQ·B`, symmetrized, with the diagonal floored and certified.
pub fn green_matrix(k: &KernelOperator, cols: &BalayageColumns) -> Result<GreenOperator> {
    let f = &cols.f_nodes;
    let q = &cols.q_nodes;
    if cols.matrix.shape() != (q.len(), f.len()) {
        return Err(Error::CloudMismatch("balayage columns have the wrong shape".into()));
    }
    if let Some(&index) = f.iter().chain(q).find(|&&i| i >= k.size()) {
        return Err(Error::IndexOutOfRange { index, size: k.size() });
    }
    let k_ff = linalg::principal(k.matrix(), f);
    let k_fq = linalg::block(k.matrix(), f, q);
    let mut g = &k_ff - &k_fq * &cols.matrix;
    let asymmetry = linalg::asymmetry(&g);
    let limit = ASYMMETRY_LIMIT * linalg::max_abs(&g);
    if asymmetry > limit {
        return Err(Error::GreenAsymmetry { asymmetry, limit });
    }
    g = (&g + g.transpose()) * 0.5;

    let mut floored = 0;
    let base: Vec<f64> = (0..f.len())
        .map(|i| {
            let floor = DIAG_FLOOR * k_ff[(i, i)];
            if g[(i, i)] < floor {
                floored += 1;
                floor
            } else {
                g[(i, i)]
            }
        })
        .collect();
    if floored > 0 {
        warn!("green diagonal floored at {floored} node(s)");
    }
    let (scale, escalations) = certify_with_escalation(&mut g, &base, 1.0, true)?;
    if escalations > 0 {
        info!("green assembly: diagonal escalated {escalations} time(s)");
    }
    let diag = DiagPolicy {
        diag_scale: scale,
        escalations,
        self_values: base.iter().map(|b| b * scale).collect(),
    };
    Ok(GreenOperator {
        kernel: KernelOperator::from_parts(g, k.alpha(), k.dim(), KernelKind::Green, diag),
        f_nodes: f.clone(),
        asymmetry,
        floored,
        quad_weights: vec![1.0; f.len()],
    })
}

/// `E_α(μ − βμ)` on the Riesz operator.
pub fn green_energy_via_identity(k: &KernelOperator, mu: &DiscreteMeasure, beta_mu: &DiscreteMeasure) -> Result<f64> {
    if mu.space() != k.size() || beta_mu.space() != k.size() {
        return Err(Error::CloudMismatch("measures not bound to the operator".into()));
    }
    let d: Vec<f64> = mu.dense().iter().zip(beta_mu.dense()).map(|(a, b)| a - b).collect();
    Ok(qp::objective(k.matrix(), &vec![0.0; d.len()], &d))
}

/// `E_α(μ) − E_α(βμ)`, the expanded form of the identity.
pub fn green_energy_difference(k: &KernelOperator, mu: &DiscreteMeasure, beta_mu: &DiscreteMeasure) -> Result<f64> {
    Ok(k.energy(mu, mu)? - k.energy(beta_mu, beta_mu)?)
}

#[derive(Debug, Clone)]
pub struct Capacity {
    pub value: f64,
    /// Equilibrium weights over the requested local nodes.
    pub weights: Vec<f64>,
    pub solution: QpSolution,
}

/// Capacity of the local node subset `e_nodes` of a Green (or Riesz) operator.
pub fn capacity(op: &KernelOperator, e_nodes: &[usize], opts: &QpOptions) -> Result<Capacity> {
    if e_nodes.is_empty() {
        return Err(Error::InvalidGeometry("capacity of an empty node set".into()));
    }
    if let Some(&index) = e_nodes.iter().find(|&&i| i >= op.size()) {
        return Err(Error::IndexOutOfRange { index, size: op.size() });
    }
    let problem = QpProblem::simplex(linalg::principal(op.matrix(), e_nodes));
    let solution = qp::solve(&problem, None, opts)?;
    Ok(Capacity {
        value: 1.0 / solution.objective,
        weights: solution.weights.clone(),
        solution,
    })
}

pub fn green_capacity(g: &GreenOperator, e_nodes: &[usize], opts: &QpOptions) -> Result<Capacity> {
    capacity(&g.kernel, e_nodes, opts)
}

/// Green potential `U^μ − U^{βμ}` at arbitrary points, from the Riesz kernel.
/// Points coinciding with a charged node are rejected.
pub fn green_potential_at(cloud: &PointCloud, alpha: f64, mu: &DiscreteMeasure, beta_mu: &DiscreteMeasure, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = cloud.dim();
    points
        .iter()
        .map(|x| {
            let mut u = 0.0;
            for (m, sign) in [(mu, 1.0), (beta_mu, -1.0)] {
                for (i, w) in m.iter() {
                    let r = crate::geometry::distance(x, cloud.point(i));
                    if r < crate::geometry::MIN_NODE_DISTANCE {
                        return Err(Error::CoincidentPoints);
                    }
                    u += sign * w * riesz_value(r, alpha, dim);
                }
            }
            Ok(u)
        })
        .collect()
}

/// Newtonian Green function of the unit ball.
pub fn ball_green_closed_form(x: &[f64], y: &[f64]) -> f64 {
    let ny = crate::geometry::norm(y);
    let direct = 1.0 / crate::geometry::distance(x, y);
    if ny < 1e-14 {
        return direct - 1.0;
    }
    let image: Vec<f64> = y.iter().map(|v| v / (ny * ny)).collect();
    direct - 1.0 / (ny * crate::geometry::distance(x, &image))
}

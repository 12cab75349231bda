//! Discrete balayage onto the complement nodes.
//!
//! The balayage of `μ` onto a node set `Q` is the energy projection of `μ`
//! onto nonnegative measures carried by `Q`: it minimizes `‖μ − ν‖²` over
//! `ν ≥ 0` without any constraint on the mass of `ν`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use log::{debug, info};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{distance, PointCloud};
use crate::kernel::{DiscreteMeasure, KernelOperator};
use crate::linalg::{self, Matrix};
use crate::qp::NonnegSolver;

/// Weights above this fraction of the total mass count as carrying charge.
pub const ACTIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Balayage {
    /// Swept measure over the cloud index space, supported in `Q`.
    pub measure: DiscreteMeasure,
    /// `μ(F) − ν(Q)`.
    pub mass_defect: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

fn check_nodes(k: &KernelOperator, nodes: &[usize]) -> Result<()> {
    match nodes.iter().find(|&&i| i >= k.size()) {
        Some(&index) => Err(Error::IndexOutOfRange { index, size: k.size() }),
        None => Ok(()),
    }
}

/// Sweeps `mu` (over the cloud index space) onto `q_nodes`.
pub fn balayage(mu: &DiscreteMeasure, k: &KernelOperator, q_nodes: &[usize]) -> Result<Balayage> {
    if q_nodes.is_empty() {
        return Err(Error::InvalidGeometry("balayage target set is empty".into()));
    }
    check_nodes(k, q_nodes)?;
    if mu.space() != k.size() {
        return Err(Error::CloudMismatch(format!("measure over {} nodes, operator over {}", mu.space(), k.size())));
    }
    let solver = NonnegSolver::new(linalg::principal(k.matrix(), q_nodes))?;
    let rhs: Vec<f64> = q_nodes
        .iter()
        .map(|&q| mu.iter().map(|(j, w)| k.entry(q, j) * w).sum())
        .collect();
    let sol = solver.solve(&rhs)?;
    let measure = DiscreteMeasure::on_nodes(k.size(), q_nodes, &sol.x)?;
    Ok(Balayage {
        mass_defect: mu.total_mass() - measure.total_mass(),
        measure,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

/// Balayages of the unit atoms at `f_nodes`, one column per atom.
#[derive(Debug, Clone)]
pub struct BalayageColumns {
    pub f_nodes: Vec<usize>,
    pub q_nodes: Vec<usize>,
    /// `|Q| × |F|`, column `j` is the balayage of `δ_{f_nodes[j]}`.
    pub matrix: Matrix,
    pub key: String,
}

impl BalayageColumns {
    pub fn column_masses(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.sum()).collect()
    }

    /// `B·w` for weights given on the `F` nodes (in `f_nodes` order).
    pub fn apply(&self, w_f: &[f64]) -> Vec<f64> {
        (&self.matrix * nalgebra::DVector::from_column_slice(w_f)).as_slice().to_vec()
    }
}

/// Computes all columns with one factorization of `K_QQ`; columns are solved
/// in parallel and stored in `f_nodes` order.
pub fn balayage_columns(k: &KernelOperator, f_nodes: &[usize], q_nodes: &[usize]) -> Result<BalayageColumns> {
    if q_nodes.is_empty() {
        return Err(Error::InvalidGeometry("balayage target set is empty".into()));
    }
    check_nodes(k, f_nodes)?;
    check_nodes(k, q_nodes)?;
    let solver = NonnegSolver::new(linalg::principal(k.matrix(), q_nodes))?;
    let rhs = linalg::block(k.matrix(), q_nodes, f_nodes);
    let x0 = solver.unconstrained_many(&rhs);
    let columns: Vec<Result<Vec<f64>>> = (0..f_nodes.len())
        .into_par_iter()
        .map(|j| {
            let b = rhs.column(j);
            let start = x0.column(j);
            if start.iter().all(|&v| v >= 0.0) {
                return Ok(start.as_slice().to_vec());
            }
            solver
                .solve_from(start.as_slice(), b.as_slice())
                .map(|s| s.x)
                .map_err(|e| Error::BalayageColumn {
                    column: j,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut matrix = Matrix::zeros(q_nodes.len(), f_nodes.len());
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        matrix.column_mut(j).copy_from_slice(&col);
    }
    debug!("balayage columns: {} x {}", q_nodes.len(), f_nodes.len());
    Ok(BalayageColumns {
        f_nodes: f_nodes.to_vec(),
        q_nodes: q_nodes.to_vec(),
        matrix,
        key: String::new(),
    })
}

/// Content-addressed store of balayage columns, in memory and optionally on disk.
#[derive(Debug, Default)]
pub struct BalayageCache {
    dir: Option<PathBuf>,
    entries: Mutex<HashMap<String, Arc<BalayageColumns>>>,
}

impl BalayageCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        BalayageCache {
            dir: Some(dir.into()),
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns cached columns for this cloud, operator and truncation radius,
    /// computing them on a miss.
    pub fn get_or_compute(
        &self,
        cloud: &PointCloud,
        k: &KernelOperator,
        truncation_radius: f64,
        f_nodes: &[usize],
        q_nodes: &[usize],
    ) -> Result<Arc<BalayageColumns>> {
        let key = cache_key(cloud, k, truncation_radius, f_nodes, q_nodes);
        if let Some(hit) = self.entries.lock().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        if let Some(cols) = self.load(&key, f_nodes, q_nodes) {
            let cols = Arc::new(cols);
            self.entries.lock().expect("cache poisoned").insert(key, Arc::clone(&cols));
            return Ok(cols);
        }
        let mut cols = balayage_columns(k, f_nodes, q_nodes)?;
        cols.key = key.clone();
        self.store(&cols)?;
        let cols = Arc::new(cols);
        self.entries.lock().expect("cache poisoned").insert(key, Arc::clone(&cols));
        Ok(cols)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.bal")))
    }

    fn load(&self, key: &str, f_nodes: &[usize], q_nodes: &[usize]) -> Option<BalayageColumns> {
        let path = self.path(key)?;
        let bytes = fs::read(&path).ok()?;
        let (rows, cols) = (q_nodes.len(), f_nodes.len());
        if bytes.len() != rows * cols * 8 {
            return None;
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        info!("balayage cache hit on disk: {}", path.display());
        Some(BalayageColumns {
            f_nodes: f_nodes.to_vec(),
            q_nodes: q_nodes.to_vec(),
            matrix: Matrix::from_column_slice(rows, cols, &values),
            key: key.to_string(),
        })
    }

    fn store(&self, cols: &BalayageColumns) -> Result<()> {
        let Some(path) = self.path(&cols.key) else {
            return Ok(());
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let bytes: Vec<u8> = cols.matrix.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }
}

/// SHA-256 over node coordinates, labels, the operator diagonal, alpha and
/// the truncation radius.
pub fn cache_key(cloud: &PointCloud, k: &KernelOperator, truncation_radius: f64, f_nodes: &[usize], q_nodes: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update((cloud.dim() as u64).to_le_bytes());
    for x in cloud.coords() {
        h.update(x.to_le_bytes());
    }
    for l in cloud.labels() {
        h.update(l.as_str().as_bytes());
    }
    h.update(k.alpha().to_le_bytes());
    for i in 0..k.size() {
        h.update(k.entry(i, i).to_le_bytes());
    }
    h.update(truncation_radius.to_le_bytes());
    for set in [f_nodes, q_nodes] {
        h.update((set.len() as u64).to_le_bytes());
        for &i in set {
            h.update((i as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Newtonian (`n = 3`, `α = 2`) harmonic measure of the sphere `S(center, radius)`
/// seen from the interior point `y`, sampled at `nodes` and multiplied by their
/// quadrature weights. The total mass approximates 1.
pub fn poisson_oracle_sphere(y: &[f64], cloud: &PointCloud, nodes: &[usize], center: &[f64], radius: f64) -> Result<DiscreteMeasure> {
    let r = distance(y, center);
    if r >= radius {
        return Err(Error::OutsideSphere { index: 0, norm: r });
    }
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&i| {
            let x = cloud.point(i);
            let d = distance(x, y);
            (radius * radius - r * r) / (4.0 * PI * radius * d.powi(3)) * cloud.quad_weight(i)
        })
        .collect();
    DiscreteMeasure::on_nodes(cloud.len(), nodes, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_example, sphere_cloud, ExampleName, GenerateOptions, Label};
    use crate::kernel::{assemble_with, AssembleOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn concentric(res: usize, radius: f64) -> (crate::geometry::ExampleGeometry, KernelOperator) {
        let opts = GenerateOptions {
            resolution: res,
            truncation_radius: radius,
            ..Default::default()
        };
        let g = generate_example(ExampleName::Concentric, &opts).unwrap();
        let k = assemble_with(&g.cloud, 2.0, AssembleOptions { diag_scale: 1.9, certify: false }).unwrap();
        (g, k)
    }

    #[test]
    fn measure_on_q_is_fixed() {
        let (g, k) = concentric(8, 2.0);
        let q = g.dc_nodes();
        let mu = DiscreteMeasure::on_nodes(k.size(), &q[..3], &[0.2, 0.3, 0.5]).unwrap();
        let b = balayage(&mu, &k, &q).unwrap();
        assert!(linalg::l1_distance(&b.measure.dense(), &mu.dense()) < 1e-9);
    }

    #[test]
    fn center_atom_sweeps_to_uniform_inner_sphere() {
        // Put a single F node at the origin and the complement shells around it.
        let g = generate_example(ExampleName::Concentric, &GenerateOptions { resolution: 8, truncation_radius: 4.0, ..Default::default() }).unwrap();
        let mut coords = vec![0.0, 0.0, 0.0];
        let mut labels = vec![Label::F];
        let mut weights = vec![1.0];
        for i in g.dc_nodes() {
            coords.extend_from_slice(g.cloud.point(i));
            labels.push(Label::Dc);
            weights.push(g.cloud.quad_weight(i));
        }
        let cloud = PointCloud::new(3, coords, labels, weights).unwrap();
        let k = assemble_with(&cloud, 2.0, AssembleOptions { diag_scale: 1.9, certify: false }).unwrap();
        let q = cloud.indices(Label::Dc);
        let mu = DiscreteMeasure::dirac(cloud.len(), 0).unwrap();
        let b = balayage(&mu, &k, &q).unwrap();
        let inner: Vec<usize> = q.iter().copied().filter(|&i| (crate::geometry::norm(cloud.point(i)) - 1.0).abs() < 1e-9).collect();
        let inner_mass: f64 = inner.iter().map(|&i| b.measure.weight_of(i).unwrap_or(0.0)).sum();
        assert!(inner_mass > 0.98 * b.measure.total_mass(), "inner {inner_mass}");
        assert!(b.mass_defect >= -1e-9 && b.mass_defect < 0.02);
        let oracle = poisson_oracle_sphere(&[0.0; 3], &cloud, &inner, &[0.0; 3], 1.0).unwrap();
        let w: Vec<f64> = inner.iter().map(|&i| b.measure.weight_of(i).unwrap_or(0.0)).collect();
        let o = oracle.gather(&inner);
        assert!(linalg::l1_distance(&w, &o) < 0.05, "{}", linalg::l1_distance(&w, &o));
    }

    #[test]
    fn columns_are_linear_and_bounded() {
        let (g, k) = concentric(8, 4.0);
        let f = g.f_nodes();
        let q = g.dc_nodes();
        let cols = balayage_columns(&k, &f, &q).unwrap();
        for m in cols.column_masses() {
            assert!(m <= 1.0 + 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = (0..f.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let mu = DiscreteMeasure::on_nodes(k.size(), &f, &w).unwrap();
        let direct = balayage(&mu, &k, &q).unwrap();
        let via = cols.apply(&w);
        assert!(linalg::l1_distance(&direct.measure.gather(&q), &via) <= 1e-6);
        assert!(direct.measure.total_mass() <= mu.total_mass() + 1e-9);
        // KKT of the projection: equal potentials where the sweep is active.
        let u_mu = k.potential(&mu, &q).unwrap();
        let u_nu = k.potential(&direct.measure, &q).unwrap();
        for (a, (&i, (&um, &un))) in q.iter().zip(u_mu.iter().zip(&u_nu)).enumerate() {
            let wi = direct.measure.weight_of(i).unwrap_or(0.0);
            if wi > ACTIVE_TOL * direct.measure.total_mass() {
                assert!((um - un).abs() <= 1e-8 * um.abs().max(1.0), "node {a}");
            } else {
                assert!(un >= um - 1e-8 * um.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_column_equals_direct_sweep() {
        let (g, k) = concentric(8, 2.0);
        let f = vec![g.f_nodes()[5]];
        let q = g.dc_nodes();
        let cols = balayage_columns(&k, &f, &q).unwrap();
        let direct = balayage(&DiscreteMeasure::dirac(k.size(), f[0]).unwrap(), &k, &q).unwrap();
        assert!(linalg::l1_distance(&direct.measure.gather(&q), cols.matrix.column(0).as_slice()) < 1e-9);
    }

    #[test]
    fn poisson_oracle() {
        let cloud = sphere_cloud(1.0, 900).unwrap();
        let nodes: Vec<usize> = (0..cloud.len()).collect();
        let centre = poisson_oracle_sphere(&[0.0; 3], &cloud, &nodes, &[0.0; 3], 1.0).unwrap();
        for (i, w) in centre.iter() {
            assert!((w - cloud.quad_weight(i) / (4.0 * PI)).abs() < 1e-15);
        }
        assert!((centre.total_mass() - 1.0).abs() < 1e-2);
        let off = poisson_oracle_sphere(&[0.5, 0.0, 0.0], &cloud, &nodes, &[0.0; 3], 1.0).unwrap();
        assert!((off.total_mass() - 1.0).abs() < 2e-2);
        let argmax = (0..nodes.len()).max_by(|&a, &b| off.weights()[a].total_cmp(&off.weights()[b])).unwrap();
        let nearest = (0..nodes.len())
            .min_by(|&a, &b| distance(cloud.point(a), &[1.0, 0.0, 0.0]).total_cmp(&distance(cloud.point(b), &[1.0, 0.0, 0.0])))
            .unwrap();
        assert_eq!(argmax, nearest);
        assert!(matches!(
            poisson_oracle_sphere(&[1.0, 0.0, 0.0], &cloud, &nodes, &[0.0; 3], 1.0),
            Err(Error::OutsideSphere { .. })
        ));
    }

    #[test]
    fn cache_hits_and_disk_round_trip() {
        let (g, k) = concentric(8, 2.0);
        let f = g.f_nodes();
        let q = g.dc_nodes();
        let dir = tempfile::tempdir().unwrap();
        let cache = BalayageCache::with_dir(dir.path());
        let a = cache.get_or_compute(&g.cloud, &k, 2.0, &f, &q).unwrap();
        let b = cache.get_or_compute(&g.cloud, &k, 2.0, &f, &q).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let fresh = BalayageCache::with_dir(dir.path());
        let c = fresh.get_or_compute(&g.cloud, &k, 2.0, &f, &q).unwrap();
        assert_eq!(c.matrix, a.matrix);
        assert_ne!(cache_key(&g.cloud, &k, 4.0, &f, &q), a.key);
    }
}

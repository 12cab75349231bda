//! Riesz kernel evaluation, dense operator assembly and discrete measures.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, separation_radii_or_nearest, PointCloud};
use crate::linalg::{self, Matrix};

/// Number of times `diag_scale` may be doubled while certifying positive definiteness.
pub const MAX_ESCALATIONS: usize = 8;

pub fn check_parameters(alpha: f64, dim: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) || dim < 3 {
        return Err(Error::InvalidKernelParameters { alpha, dim });
    }
    Ok(())
}

/// `|x − y|^(α − n)`.
pub fn riesz_kernel(x: &[f64], y: &[f64], alpha: f64, dim: usize) -> Result<f64> {
    check_parameters(alpha, dim)?;
    let r = distance(x, y);
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(riesz_value(r, alpha, dim))
}

#[inline]
pub(crate) fn riesz_value(r: f64, alpha: f64, dim: usize) -> f64 {
    let e = alpha - dim as f64;
    if e == -1.0 {
        1.0 / r
    } else {
        r.powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Riesz,
    Green,
}

/// Record of the regularized self-values placed on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagPolicy {
    /// Scale actually used after escalation.
    pub diag_scale: f64,
    /// Number of doublings needed to certify positive definiteness.
    pub escalations: usize,
    pub self_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    pub diag_scale: f64,
    /// Skip the Cholesky certification (only for fixtures known to be PD).
    pub certify: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            diag_scale: 1.0,
            certify: true,
        }
    }
}

/// Dense symmetric kernel matrix over an index space of `size` nodes.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    entries: Matrix,
    alpha: f64,
    dim: usize,
    kind: KernelKind,
    diag: DiagPolicy,
}

impl KernelOperator {
    /// Wraps a matrix produced elsewhere (Green assembly, dumps, tests).
    pub fn from_parts(entries: Matrix, alpha: f64, dim: usize, kind: KernelKind, diag: DiagPolicy) -> Self {
        debug_assert_eq!(entries.nrows(), entries.ncols());
        KernelOperator {
            entries,
            alpha,
            dim,
            kind,
            diag,
        }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn diag_policy(&self) -> &DiagPolicy {
        &self.diag
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Mutable access for fault injection in the invariant suite.
    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.entries
    }

    fn check_measure(&self, mu: &DiscreteMeasure) -> Result<()> {
        if mu.space() != self.size() {
            return Err(Error::CloudMismatch(format!(
                "measure over {} nodes, operator over {}",
                mu.space(),
                self.size()
            )));
        }
        Ok(())
    }

    /// `U[i] = Σ_j K[i,j] w_j` for each query node.
    pub fn potential(&self, mu: &DiscreteMeasure, query: &[usize]) -> Result<Vec<f64>> {
        self.check_measure(mu)?;
        let n = self.size();
        if let Some(&bad) = query.iter().find(|&&q| q >= n) {
            return Err(Error::IndexOutOfRange { index: bad, size: n });
        }
        Ok(query
            .iter()
            .map(|&q| mu.iter().map(|(j, w)| self.entries[(q, j)] * w).sum())
            .collect())
    }

    /// Potential at every node of the index space.
    pub fn potential_all(&self, mu: &DiscreteMeasure) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.size()).collect();
        self.potential(mu, &all)
    }

    /// Mutual energy `w_μᵀ K w_ν`.
    pub fn energy(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        self.check_measure(mu)?;
        self.check_measure(nu)?;
        let mut e = 0.0;
        for (i, a) in mu.iter() {
            let mut row = 0.0;
            for (j, b) in nu.iter() {
                row += self.entries[(i, j)] * b;
            }
            e += a * row;
        }
        Ok(e)
    }

    /// Mutual energy with the diagonal terms omitted.
    pub fn offdiag_energy(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        let full = self.energy(mu, nu)?;
        let diag: f64 = mu
            .iter()
            .filter_map(|(i, a)| nu.weight_of(i).map(|b| self.entries[(i, i)] * a * b))
            .sum();
        Ok(full - diag)
    }

    /// Writes the binary dump: 16-byte header then row-major little-endian f64.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_dump(&mut w).map_err(|e| Error::io(path, e))
    }

    fn write_dump<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let magic: &[u8; 2] = match self.kind {
            KernelKind::Riesz => b"KR",
            KernelKind::Green => b"KG",
        };
        w.write_all(magic)?;
        w.write_all(&(self.dim as u16).to_le_bytes())?;
        w.write_all(&(self.size() as u32).to_le_bytes())?;
        w.write_all(&self.alpha.to_le_bytes())?;
        let n = self.size();
        for i in 0..n {
            for j in 0..n {
                w.write_all(&self.entries[(i, j)].to_le_bytes())?;
            }
        }
        w.flush()
    }

    /// Reads a dump written by [`KernelOperator::dump`]. The diagonal policy is
    /// reconstructed from the stored diagonal with scale 1.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut header = [0u8; 16];
        r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        let kind = match &header[0..2] {
            b"KR" => KernelKind::Riesz,
            b"KG" => KernelKind::Green,
            other => return Err(Error::Dump(format!("bad magic {other:?}"))),
        };
        let dim = u16::from_le_bytes([header[2], header[3]]) as usize;
        let size = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
        let alpha = f64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        let mut body = Vec::new();
        r.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
        if body.len() != size * size * 8 {
            return Err(Error::Dump(format!(
                "expected {} payload bytes, found {}",
                size * size * 8,
                body.len()
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let entries = Matrix::from_row_slice(size, size, &values);
        let diag = DiagPolicy {
            diag_scale: 1.0,
            escalations: 0,
            self_values: entries.diagonal().iter().copied().collect(),
        };
        Ok(KernelOperator::from_parts(entries, alpha, dim, kind, diag))
    }
}

/// Assembles the Riesz operator on every node of `cloud` with default options.
pub fn assemble(cloud: &PointCloud, alpha: f64) -> Result<KernelOperator> {
    assemble_with(cloud, alpha, AssembleOptions::default())
}

/// Assembles the Riesz operator with diagonal `h_i^(α−n)·diag_scale`, where
/// `h_i` is the separation radius. Positive definiteness is certified by a
/// Cholesky factorization; on failure `diag_scale` is doubled.
pub fn assemble_with(cloud: &PointCloud, alpha: f64, opts: AssembleOptions) -> Result<KernelOperator> {
    let dim = cloud.dim();
    check_parameters(alpha, dim)?;
    let n = cloud.len();
    let h = if n >= 2 { separation_radii_or_nearest(cloud)? } else { vec![1.0; n] };
    let base: Vec<f64> = h.iter().map(|&r| riesz_value(r, alpha, dim)).collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { riesz_value(cloud.distance(i, j), alpha, dim) })
                .collect()
        })
        .collect();
    let mut entries = Matrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            entries[(i, j)] = v;
        }
    }
    let (scale, escalations) = certify_with_escalation(&mut entries, &base, opts.diag_scale, opts.certify)?;
    if escalations > 0 {
        info!("riesz assembly: diag_scale escalated {escalations} time(s) to {scale}");
    }
    let diag = DiagPolicy {
        diag_scale: scale,
        escalations,
        self_values: base.iter().map(|b| b * scale).collect(),
    };
    Ok(KernelOperator::from_parts(entries, alpha, dim, KernelKind::Riesz, diag))
}

/// Sets `m[i,i] = base[i]·scale` and doubles `scale` until a Cholesky
/// factorization succeeds. Returns the scale used and the number of doublings.
pub(crate) fn certify_with_escalation(m: &mut Matrix, base: &[f64], scale: f64, certify: bool) -> Result<(f64, usize)> {
    let mut scale = scale;
    let mut last_pivot = f64::NAN;
    for attempt in 0..=MAX_ESCALATIONS {
        for (i, b) in base.iter().enumerate() {
            m[(i, i)] = b * scale;
        }
        if !certify {
            return Ok((scale, 0));
        }
        match linalg::cholesky(m) {
            Ok(_) => return Ok((scale, attempt)),
            Err(p) => last_pivot = p,
        }
        scale *= 2.0;
    }
    Err(Error::NotPositiveDefinite {
        attempts: MAX_ESCALATIONS,
        pivot: last_pivot,
    })
}

/// Nonnegative atomic weights over a sorted subset of an index space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    space: usize,
    node_indices: Vec<usize>,
    weights: Vec<f64>,
    total_mass: f64,
}

impl DiscreteMeasure {
    pub fn new(space: usize, node_indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if node_indices.len() != weights.len() {
            return Err(Error::CloudMismatch(format!(
                "{} indices but {} weights",
                node_indices.len(),
                weights.len()
            )));
        }
        let mut pairs: Vec<(usize, f64)> = node_indices.into_iter().zip(weights).collect();
        pairs.sort_by_key(|p| p.0);
        for (k, &(i, w)) in pairs.iter().enumerate() {
            if i >= space {
                return Err(Error::IndexOutOfRange { index: i, size: space });
            }
            if k > 0 && pairs[k - 1].0 == i {
                return Err(Error::InvalidNode {
                    index: i,
                    reason: "repeated in measure".into(),
                });
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidNode {
                    index: i,
                    reason: format!("weight {w} is not a finite nonnegative number"),
                });
            }
        }
        let (node_indices, weights): (Vec<usize>, Vec<f64>) = pairs.into_iter().unzip();
        let total_mass = weights.iter().sum();
        Ok(DiscreteMeasure {
            space,
            node_indices,
            weights,
            total_mass,
        })
    }

    pub fn zero(space: usize) -> Self {
        DiscreteMeasure {
            space,
            node_indices: Vec::new(),
            weights: Vec::new(),
            total_mass: 0.0,
        }
    }

    pub fn dirac(space: usize, node: usize) -> Result<Self> {
        Self::new(space, vec![node], vec![1.0])
    }

    /// Measure over all nodes of the space; negative round-off is clipped to 0.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let idx: Vec<usize> = (0..dense.len()).collect();
        let w: Vec<f64> = dense.iter().map(|&v| if v < 0.0 && v > -1e-300 { 0.0 } else { v.max(0.0) }).collect();
        Self::new(dense.len(), idx, w)
    }

    /// Embeds weights given on `nodes` (in that order) into a space of `space` nodes.
    pub fn on_nodes(space: usize, nodes: &[usize], weights: &[f64]) -> Result<Self> {
        Self::new(space, nodes.to_vec(), weights.iter().map(|w| w.max(0.0)).collect())
    }

    pub fn space(&self) -> usize {
        self.space
    }

    pub fn node_indices(&self) -> &[usize] {
        &self.node_indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.node_indices.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn weight_of(&self, node: usize) -> Option<f64> {
        self.node_indices.binary_search(&node).ok().map(|k| self.weights[k])
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.space];
        for (i, w) in self.iter() {
            out[i] = w;
        }
        out
    }

    /// Weights restricted to `nodes`, in that order (0 where absent).
    pub fn gather(&self, nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&i| self.weight_of(i).unwrap_or(0.0)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let weights: Vec<f64> = self.weights.iter().map(|w| w * factor).collect();
        DiscreteMeasure {
            space: self.space,
            node_indices: self.node_indices.clone(),
            total_mass: weights.iter().sum(),
            weights,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::CloudMismatch("measures live on different spaces".into()));
        }
        let a = self.dense();
        let b = other.dense();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let idx: Vec<usize> = (0..self.space).filter(|&i| sum[i] != 0.0).collect();
        let w = idx.iter().map(|&i| sum[i]).collect();
        Self::new(self.space, idx, w)
    }
}

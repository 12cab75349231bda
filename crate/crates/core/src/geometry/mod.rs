//! Point-cloud discretizations of the condenser plates.
//!
//! A [`PointCloud`] holds every node of an instance in row order: the
//! positive plate `F` (inside the domain `D`), the truncated complement `Dc`,
//! and optional `probe` nodes used only for evaluating potentials. Each node
//! carries a quadrature weight that stands in for the surface or volume
//! element attributed to it.

mod generate;
mod io;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_example, shell_radii, sphere_cloud, ExampleGeometry, ExampleName, GenerateOptions, MIN_RESOLUTION};
pub use io::{load_points, write_points, PointFormat};

/// Minimum admissible distance between two nodes of a cloud.
pub const MIN_NODE_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    F,
    Dc,
    Probe,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "F" => Some(Label::F),
            "Dc" => Some(Label::Dc),
            "probe" => Some(Label::Probe),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::F => "F",
            Label::Dc => "Dc",
            Label::Probe => "probe",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    labels: Vec<Label>,
    quad_weights: Vec<f64>,
}

impl PointCloud {
    /// Builds a cloud from row-major coordinates and validates the node invariants.
    pub fn new(dim: usize, coords: Vec<f64>, labels: Vec<Label>, quad_weights: Vec<f64>) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidGeometry(format!("dimension {dim} < 3")));
        }
        if coords.len() != dim * labels.len() || quad_weights.len() != labels.len() {
            return Err(Error::InvalidGeometry(format!(
                "inconsistent lengths: {} coordinates, {} labels, {} weights",
                coords.len(),
                labels.len(),
                quad_weights.len()
            )));
        }
        let cloud = PointCloud {
            dim,
            coords,
            labels,
            quad_weights,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.len() {
            if self.point(i).iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidNode {
                    index: i,
                    reason: "non-finite coordinate".into(),
                });
            }
            let w = self.quad_weights[i];
            let needs_weight = self.labels[i] != Label::Probe;
            if !w.is_finite() || w < 0.0 || (needs_weight && w <= 0.0) {
                return Err(Error::InvalidNode {
                    index: i,
                    reason: format!("quadrature weight {w} must be positive"),
                });
            }
        }
        if let Some((first, second, distance)) = self.closest_pair_below(MIN_NODE_DISTANCE) {
            return Err(Error::DuplicateNode {
                first,
                second,
                distance,
            });
        }
        Ok(())
    }

    /// Checks that `F` nodes lie in the open domain and `Dc` nodes in its complement.
    pub fn validate_domain(&self, domain: &DomainSpec) -> Result<()> {
        for i in 0..self.len() {
            match self.labels[i] {
                Label::F if !domain.contains(self.point(i)) => {
                    return Err(Error::InvalidNode {
                        index: i,
                        reason: "F node outside the domain".into(),
                    })
                }
                Label::Dc if !domain.in_complement(self.point(i)) => {
                    return Err(Error::InvalidNode {
                        index: i,
                        reason: "Dc node inside the domain".into(),
                    })
                }
                _ => {}
            }
        }
        let f_radius = self.circumradius(Label::F);
        if domain.truncation_radius <= f_radius {
            return Err(Error::InvalidGeometry(format!(
                "truncation radius {} does not exceed the F circumradius {f_radius}",
                domain.truncation_radius
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn quad_weight(&self, i: usize) -> f64 {
        self.quad_weights[i]
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Node indices carrying `label`, in row order.
    pub fn indices(&self, label: Label) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.point(i), self.point(j))
    }

    /// Largest distance from the centroid of the `label` nodes to one of them.
    pub fn circumradius(&self, label: Label) -> f64 {
        let idx = self.indices(label);
        if idx.is_empty() {
            return 0.0;
        }
        let mut centroid = vec![0.0; self.dim];
        for &i in &idx {
            for (c, x) in centroid.iter_mut().zip(self.point(i)) {
                *c += x / idx.len() as f64;
            }
        }
        idx.iter()
            .map(|&i| distance(self.point(i), &centroid))
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounding box `(lo, hi)` of all nodes.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for i in 0..self.len() {
            for (k, &x) in self.point(i).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        (lo, hi)
    }

    /// Returns a copy whose nodes are mapped through `f`; weights are kept.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<PointCloud> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for i in 0..self.len() {
            coords.extend(f(self.point(i)));
        }
        PointCloud::new(self.dim, coords, self.labels.clone(), self.quad_weights.clone())
    }

    /// Returns the first pair closer than `threshold`, scanning in sorted x₁ order.
    fn closest_pair_below(&self, threshold: f64) -> Option<(usize, usize, f64)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.point(a)[0].total_cmp(&self.point(b)[0]));
        for (pos, &i) in order.iter().enumerate() {
            for &j in &order[pos + 1..] {
                if self.point(j)[0] - self.point(i)[0] >= threshold {
                    break;
                }
                let d = self.distance(i, j);
                if d < threshold {
                    return Some((i.min(j), i.max(j), d));
                }
            }
        }
        None
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// For each node, half the distance to its nearest neighbour with the same label.
///
/// Uses a sort-and-sweep along the first coordinate; a class with a single
/// node is an error.
pub fn separation_radii(cloud: &PointCloud) -> Result<Vec<f64>> {
    if cloud.len() < 2 {
        return Err(Error::InvalidGeometry("separation radii need at least two nodes".into()));
    }
    let mut out = vec![f64::NAN; cloud.len()];
    for label in [Label::F, Label::Dc, Label::Probe] {
        let idx = cloud.indices(label);
        if idx.len() == 1 {
            return Err(Error::SingletonClass(label.to_string()));
        }
        sweep_nearest(cloud, &idx, &idx, &mut out);
    }
    Ok(out)
}

/// Like [`separation_radii`], but a singleton class falls back to the nearest
/// node of any label.
pub fn separation_radii_or_nearest(cloud: &PointCloud) -> Result<Vec<f64>> {
    if cloud.len() < 2 {
        return Err(Error::InvalidGeometry("separation radii need at least two nodes".into()));
    }
    let all: Vec<usize> = (0..cloud.len()).collect();
    let mut out = vec![f64::NAN; cloud.len()];
    for label in [Label::F, Label::Dc, Label::Probe] {
        let idx = cloud.indices(label);
        match idx.len() {
            0 => {}
            1 => sweep_nearest(cloud, &idx, &all, &mut out),
            _ => sweep_nearest(cloud, &idx, &idx, &mut out),
        }
    }
    Ok(out)
}

fn sweep_nearest(cloud: &PointCloud, targets: &[usize], pool: &[usize], out: &mut [f64]) {
    let mut sorted: Vec<usize> = pool.to_vec();
    sorted.sort_by(|&a, &b| cloud.point(a)[0].total_cmp(&cloud.point(b)[0]));
    let keys: Vec<f64> = sorted.iter().map(|&i| cloud.point(i)[0]).collect();
    for &i in targets {
        let xi = cloud.point(i)[0];
        let start = keys.partition_point(|&k| k < xi);
        let mut best = f64::INFINITY;
        // walk right
        for (pos, &j) in sorted.iter().enumerate().skip(start) {
            if keys[pos] - xi >= best {
                break;
            }
            if j != i {
                best = best.min(cloud.distance(i, j));
            }
        }
        // walk left
        for pos in (0..start).rev() {
            if xi - keys[pos] >= best {
                break;
            }
            let j = sorted[pos];
            if j != i {
                best = best.min(cloud.distance(i, j));
            }
        }
        out[i] = 0.5 * best;
    }
}

/// Region description of the domain `D` (open) and its complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Ball { center: Vec<f64>, radius: f64 },
    /// `D = { x : normal·x > offset }` with a unit normal.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Custom(CustomRegion),
}

/// Named regions that are neither balls nor half-spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum CustomRegion {
    /// `D = { x : x₁ > start, x₂² + x₃² < x₁⁻² }`, a horn narrowing along x₁.
    Horn { start: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Absolute extent of the discretized complement.
    pub truncation_radius: f64,
}

impl DomainSpec {
    pub fn unit_ball(truncation_radius: f64) -> Self {
        DomainSpec {
            kind: DomainKind::Ball {
                center: vec![0.0; 3],
                radius: 1.0,
            },
            truncation_radius,
        }
    }

    /// Strict membership in the open domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            DomainKind::Ball { center, radius } => distance(x, center) < *radius,
            DomainKind::HalfSpace { normal, offset } => crate::linalg::dot(normal, x) > *offset,
            DomainKind::Custom(CustomRegion::Horn { start }) => {
                let lateral: f64 = x[1..].iter().map(|v| v * v).sum();
                x[0] > *start && lateral * x[0] * x[0] < 1.0
            }
        }
    }

    /// Membership in the closed complement, allowing `1e-12` of round-off
    /// for nodes placed on the boundary.
    pub fn in_complement(&self, x: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        match &self.kind {
            DomainKind::Ball { center, radius } => distance(x, center) >= *radius - SLACK,
            DomainKind::HalfSpace { normal, offset } => crate::linalg::dot(normal, x) <= *offset + SLACK,
            DomainKind::Custom(CustomRegion::Horn { start }) => {
                let lateral: f64 = x[1..].iter().map(|v| v * v).sum();
                x[0] <= *start + SLACK || lateral * x[0] * x[0] >= 1.0 - SLACK
            }
        }
    }

    /// Distance to the boundary where it has a closed form.
    pub fn boundary_distance(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            DomainKind::Ball { center, radius } => Some((distance(x, center) - radius).abs()),
            DomainKind::HalfSpace { normal, offset } => Some((crate::linalg::dot(normal, x) - offset).abs()),
            DomainKind::Custom(_) => None,
        }
    }
}

//! Generators for the packaged condenser geometries.
//!
//! All examples live in ℝ³. Ball complements are discretized as nested
//! spherical shells at radii `2^(k/m)` (m = shells per octave) up to the
//! truncation radius, so that raising the truncation radius only appends
//! shells. Node counts per shell depend on the shell index alone.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{norm, CustomRegion, DomainKind, DomainSpec, Label, PointCloud};
use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 8;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Outer rings of the half-space complement grow by this ratio.
const RING_RATIO: f64 = 1.2;
const RING_NODES: usize = 32;

/// Packaged geometries. `ex1`..`ex5` follow the order of the worked examples;
/// `concentric` is the spherical capacitor used for closed-form checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleName {
    /// ex1: unit ball with a thin tube around a radius, touching ∂D at (1,0,0).
    Tube,
    /// ex2: unit ball with F = D (solid ball).
    FullBall,
    /// ex3: unit ball with the internally tangent sphere S((1/2,0,0), 1/2).
    TangentSphere,
    /// ex4: half-space x₁ > 0 with the parallel plane x₁ = 1.
    HalfSpace,
    /// ex5: exponentially thin tube inside a horn.
    Cusp,
    /// Sphere of radius 1/2 centred in the unit ball.
    Concentric,
    /// Solid ball of radius 1/2 centred in the unit ball.
    SolidBall,
}

impl ExampleName {
    pub const ALL: [ExampleName; 7] = [
        ExampleName::Tube,
        ExampleName::FullBall,
        ExampleName::TangentSphere,
        ExampleName::HalfSpace,
        ExampleName::Cusp,
        ExampleName::Concentric,
        ExampleName::SolidBall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleName::Tube => "ex1",
            ExampleName::FullBall => "ex2",
            ExampleName::TangentSphere => "ex3",
            ExampleName::HalfSpace => "ex4",
            ExampleName::Cusp => "ex5",
            ExampleName::Concentric => "concentric",
            ExampleName::SolidBall => "solid-ball",
        }
    }

    /// Whether `F` is a solid region (volume quadrature) rather than a surface.
    pub fn solid_plate(self) -> bool {
        matches!(self, ExampleName::Tube | ExampleName::FullBall | ExampleName::SolidBall)
    }
}

impl fmt::Display for ExampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "ex1" | "tube" => ExampleName::Tube,
            "ex2" | "full-ball" => ExampleName::FullBall,
            "ex3" | "tangent-sphere" => ExampleName::TangentSphere,
            "ex4" | "half-space" => ExampleName::HalfSpace,
            "ex5" | "cusp" => ExampleName::Cusp,
            "concentric" => ExampleName::Concentric,
            "solid-ball" => ExampleName::SolidBall,
            other => return Err(Error::UnknownExample(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    /// Controls the density of `F` nodes (≥ 8).
    pub resolution: usize,
    /// Controls the density of the innermost complement layer; defaults to `resolution`.
    pub dc_resolution: Option<usize>,
    /// Truncation of the complement. For the half-space example this is in
    /// units of the plate radius (number of annuli); otherwise absolute.
    pub truncation_radius: f64,
    pub shells_per_octave: usize,
    /// Number of unit-width annuli in the half-space plate.
    pub annuli: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            resolution: 16,
            dc_resolution: None,
            truncation_radius: 8.0,
            shells_per_octave: 1,
            annuli: 5,
        }
    }
}

impl GenerateOptions {
    pub fn with_resolution(resolution: usize) -> Self {
        GenerateOptions {
            resolution,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExampleGeometry {
    pub name: ExampleName,
    pub cloud: PointCloud,
    pub domain: DomainSpec,
    /// Annulus index `k ≥ 1` of each node for the half-space example (0 elsewhere).
    pub annulus: Vec<usize>,
    /// Marks `F` nodes on the outer layer of a solid plate.
    pub boundary: Vec<bool>,
}

impl ExampleGeometry {
    pub fn f_nodes(&self) -> Vec<usize> {
        self.cloud.indices(Label::F)
    }

    pub fn dc_nodes(&self) -> Vec<usize> {
        self.cloud.indices(Label::Dc)
    }
}

/// Builds the plate discretizations of one packaged example.
pub fn generate_example(name: ExampleName, opts: &GenerateOptions) -> Result<ExampleGeometry> {
    if opts.resolution < MIN_RESOLUTION {
        return Err(Error::ResolutionTooSmall {
            got: opts.resolution,
            min: MIN_RESOLUTION,
        });
    }
    if !(opts.truncation_radius > 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "truncation radius {} must exceed 1",
            opts.truncation_radius
        )));
    }
    let res = opts.resolution;
    let dc_res = opts.dc_resolution.unwrap_or(res).max(MIN_RESOLUTION);
    let mut b = Builder::default();
    let domain;
    let mut boundary_marks: Vec<bool> = Vec::new();
    match name {
        ExampleName::Concentric => {
            let pts = fibonacci_sphere([0.0; 3], 0.5, res * res, Axis::X3, 0.5);
            b.push_surface(&pts, Label::F, 4.0 * PI * 0.25);
            domain = DomainSpec::unit_ball(opts.truncation_radius);
            ball_complement(&mut b, dc_res, opts);
        }
        ExampleName::TangentSphere => {
            let pts = fibonacci_sphere([0.5, 0.0, 0.0], 0.5, res * res, Axis::X1, 0.0);
            b.push_surface(&pts, Label::F, PI);
            domain = DomainSpec::unit_ball(opts.truncation_radius);
            ball_complement(&mut b, dc_res, opts);
        }
        ExampleName::FullBall => {
            let s = 2.0 / res as f64;
            let pts = cubic_grid([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], s, true, |x| norm(x) <= 1.0 - 0.5 * s);
            boundary_marks = grid_boundary(&pts, s, |x| norm(x) <= 1.0 - 0.5 * s);
            b.push_volume(&pts, Label::F, 4.0 * PI / 3.0);
            domain = DomainSpec::unit_ball(opts.truncation_radius);
            ball_complement(&mut b, dc_res, opts);
        }
        ExampleName::SolidBall => {
            let s = 1.0 / res as f64;
            let inside = |x: &[f64]| norm(x) <= 0.5 - 0.5 * s;
            let pts = cubic_grid([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5], s, true, inside);
            boundary_marks = grid_boundary(&pts, s, inside);
            b.push_volume(&pts, Label::F, PI / 6.0);
            domain = DomainSpec::unit_ball(opts.truncation_radius);
            ball_complement(&mut b, dc_res, opts);
        }
        ExampleName::Tube => {
            let s = 0.6 / res as f64;
            let pts = cubic_grid([-TUBE_RADIUS, -TUBE_RADIUS, -TUBE_RADIUS], [1.0, TUBE_RADIUS, TUBE_RADIUS], s, false, in_tube);
            boundary_marks = grid_boundary(&pts, s, in_tube);
            b.push_volume(&pts, Label::F, tube_volume());
            domain = DomainSpec::unit_ball(opts.truncation_radius);
            ball_complement(&mut b, dc_res, opts);
        }
        ExampleName::HalfSpace => {
            let annuli = opts.annuli.max(1);
            let k = annuli as f64;
            let s = 8.0 / res as f64;
            let n_f = ((PI * k * k) / (0.866 * s * s)).round() as usize;
            let f_pts: Vec<[f64; 3]> = vogel_disk(k, n_f).into_iter().map(|(y, z)| [1.0, y, z]).collect();
            b.push_uniform(&f_pts, Label::F, PI * k * k);
            b.annulus = f_pts
                .iter()
                .map(|p| ((p[1] * p[1] + p[2] * p[2]).sqrt().ceil() as usize).max(1))
                .collect();
            let abs_truncation = opts.truncation_radius * k;
            let inner = k + 2.0;
            let n_in = ((PI * inner * inner) / (0.866 * s * s)).round() as usize;
            let disk: Vec<[f64; 3]> = vogel_disk(inner, n_in).into_iter().map(|(y, z)| [0.0, y, z]).collect();
            b.push_uniform(&disk, Label::Dc, PI * inner * inner);
            let mut prev = inner;
            let mut j = 1;
            loop {
                let rho = inner * RING_RATIO.powi(j);
                if rho > abs_truncation * (1.0 + 1e-12) {
                    break;
                }
                let ring: Vec<[f64; 3]> = (0..RING_NODES)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / RING_NODES as f64 + GOLDEN_ANGLE * j as f64;
                        [0.0, rho * t.cos(), rho * t.sin()]
                    })
                    .collect();
                let area = PI * (rho * rho - prev * prev);
                b.push_uniform(&ring, Label::Dc, area);
                prev = rho;
                j += 1;
            }
            domain = DomainSpec {
                kind: DomainKind::HalfSpace {
                    normal: vec![1.0, 0.0, 0.0],
                    offset: 0.0,
                },
                truncation_radius: abs_truncation,
            };
        }
        ExampleName::Cusp => {
            let f_len = 3.0;
            let stations = 2 * res;
            let dx = f_len / stations as f64;
            let per_ring = 6;
            for j in 0..stations {
                let x1 = 2.0 + (j as f64 + 0.5) * dx;
                let r = (-x1).exp();
                let ring: Vec<[f64; 3]> = (0..per_ring)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / per_ring as f64 + GOLDEN_ANGLE * j as f64;
                        [x1, r * t.cos(), r * t.sin()]
                    })
                    .collect();
                let area = 2.0 * PI * r * (1.0 + r * r).sqrt() * dx;
                b.push_uniform(&ring, Label::F, area);
            }
            let sh = 1.8 / dc_res as f64;
            let n_disc = (PI / (0.866 * sh * sh)).round() as usize;
            let disc: Vec<[f64; 3]> = vogel_disk(1.0 - 0.5 * sh, n_disc).into_iter().map(|(y, z)| [1.0, y, z]).collect();
            b.push_uniform(&disc, Label::Dc, PI);
            let mut j = 0;
            loop {
                let x1 = 1.0 + (j as f64 + 0.5) * sh;
                if x1 > opts.truncation_radius {
                    break;
                }
                let r = 1.0 / x1;
                let m = ((2.0 * PI * r / sh).round() as usize).max(8);
                let ring: Vec<[f64; 3]> = (0..m)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / m as f64 + GOLDEN_ANGLE * j as f64;
                        [x1, r * t.cos(), r * t.sin()]
                    })
                    .collect();
                let area = 2.0 * PI * r * (1.0 + r.powi(4)).sqrt() * sh;
                b.push_uniform(&ring, Label::Dc, area);
                j += 1;
            }
            domain = DomainSpec {
                kind: DomainKind::Custom(CustomRegion::Horn { start: 1.0 }),
                truncation_radius: opts.truncation_radius,
            };
        }
    }
    let n = b.labels.len();
    let mut annulus = b.annulus.clone();
    annulus.resize(n, 0);
    boundary_marks.resize(n, false);
    let cloud = PointCloud::new(3, b.coords, b.labels, b.weights)?;
    cloud.validate_domain(&domain)?;
    Ok(ExampleGeometry {
        name,
        cloud,
        domain,
        annulus,
        boundary: boundary_marks,
    })
}

/// A sphere of `count` near-uniform `F` nodes with area-normalized weights.
pub fn sphere_cloud(radius: f64, count: usize) -> Result<PointCloud> {
    let pts = fibonacci_sphere([0.0; 3], radius, count, Axis::X3, 0.0);
    let mut b = Builder::default();
    b.push_surface(&pts, Label::F, 4.0 * PI * radius * radius);
    PointCloud::new(3, b.coords, b.labels, b.weights)
}

/// Radii of the complement shells for a unit ball.
pub fn shell_radii(truncation_radius: f64, shells_per_octave: usize) -> Vec<f64> {
    let m = shells_per_octave.max(1) as f64;
    (0..)
        .map(|k| 2f64.powf(k as f64 / m))
        .take_while(|&r| r <= truncation_radius * (1.0 + 1e-12))
        .collect()
}

fn ball_complement(b: &mut Builder, dc_res: usize, opts: &GenerateOptions) {
    let inner = dc_res * dc_res;
    for (k, r) in shell_radii(opts.truncation_radius, opts.shells_per_octave).into_iter().enumerate() {
        let count = if k == 0 { inner } else { (inner / 4).max(32) };
        let pts = fibonacci_sphere([0.0; 3], r, count, Axis::X3, 0.37 * k as f64);
        b.push_surface(&pts, Label::Dc, 4.0 * PI * r * r);
    }
}

const TUBE_RADIUS: f64 = 0.15;

/// Cone-shaped neighbourhood of the radius [0, 1)×{0}×{0}, capped by a half ball.
fn in_tube(x: &[f64]) -> bool {
    let lateral = (x[1] * x[1] + x[2] * x[2]).sqrt();
    if x[0] < 0.0 {
        norm(x) <= TUBE_RADIUS
    } else {
        x[0] < 1.0 && lateral <= TUBE_RADIUS * (1.0 - x[0])
    }
}

fn tube_volume() -> f64 {
    PI * TUBE_RADIUS * TUBE_RADIUS / 3.0 + 2.0 * PI * TUBE_RADIUS.powi(3) / 3.0
}

#[derive(Clone, Copy)]
enum Axis {
    X1,
    X3,
}

fn fibonacci_sphere(center: [f64; 3], radius: f64, count: usize, axis: Axis, phase: f64) -> Vec<[f64; 3]> {
    (0..count)
        .map(|i| {
            let t = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let rho = (1.0 - t * t).max(0.0).sqrt();
            let phi = GOLDEN_ANGLE * i as f64 + phase;
            let (a, b) = (rho * phi.cos(), rho * phi.sin());
            let u = match axis {
                Axis::X1 => [t, a, b],
                Axis::X3 => [a, b, t],
            };
            [
                center[0] + radius * u[0],
                center[1] + radius * u[1],
                center[2] + radius * u[2],
            ]
        })
        .collect()
}

/// Vogel spiral with `count` points filling the disk of radius `radius`.
fn vogel_disk(radius: f64, count: usize) -> Vec<(f64, f64)> {
    (0..count)
        .map(|i| {
            let r = radius * ((i as f64 + 0.5) / count as f64).sqrt();
            let t = GOLDEN_ANGLE * i as f64;
            (r * t.cos(), r * t.sin())
        })
        .collect()
}

/// Grid nodes inside `keep`. With `centered` the lattice is offset by half a
/// cell so that no node sits at the origin; otherwise it passes through the
/// x₁ axis.
fn cubic_grid(lo: [f64; 3], hi: [f64; 3], s: f64, centered: bool, keep: impl Fn(&[f64]) -> bool) -> Vec<[f64; 3]> {
    let off = if centered { 0.5 * s } else { 0.0 };
    let range = |l: f64, h: f64| {
        let a = ((l - off) / s).floor() as i64;
        let b = ((h - off) / s).ceil() as i64;
        a..=b
    };
    let mut out = Vec::new();
    for i in range(lo[0], hi[0]) {
        for j in range(lo[1], hi[1]) {
            for k in range(lo[2], hi[2]) {
                let p = [i as f64 * s + off, j as f64 * s + off, k as f64 * s + off];
                if keep(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// A grid node is on the outer layer when its neighbourhood ball, the
/// 3×3×3 lattice stencil around it, leaves the region.
fn grid_boundary(pts: &[[f64; 3]], s: f64, keep: impl Fn(&[f64]) -> bool) -> Vec<bool> {
    const STEPS: [f64; 3] = [-1.0, 0.0, 1.0];
    pts.iter()
        .map(|p| {
            STEPS.iter().any(|&a| {
                STEPS.iter().any(|&b| {
                    STEPS.iter().any(|&c| {
                        let q = [p[0] + a * s, p[1] + b * s, p[2] + c * s];
                        !keep(&q)
                    })
                })
            })
        })
        .collect()
}

#[derive(Default)]
struct Builder {
    coords: Vec<f64>,
    labels: Vec<Label>,
    weights: Vec<f64>,
    annulus: Vec<usize>,
}

impl Builder {
    /// Weights ∝ (separation radius)², normalized to `total`.
    fn push_surface(&mut self, pts: &[[f64; 3]], label: Label, total: f64) {
        self.push_scaled(pts, label, total, 2);
    }

    /// Weights ∝ (separation radius)³, normalized to `total`.
    fn push_volume(&mut self, pts: &[[f64; 3]], label: Label, total: f64) {
        self.push_scaled(pts, label, total, 3);
    }

    fn push_uniform(&mut self, pts: &[[f64; 3]], label: Label, total: f64) {
        self.push_scaled(pts, label, total, 0);
    }

    fn push_scaled(&mut self, pts: &[[f64; 3]], label: Label, total: f64, exponent: i32) {
        let raw: Vec<f64> = if exponent == 0 || pts.len() < 2 {
            vec![1.0; pts.len()]
        } else {
            nearest_half_distances(pts).iter().map(|h| h.powi(exponent)).collect()
        };
        let sum: f64 = raw.iter().sum();
        for (p, w) in pts.iter().zip(raw) {
            self.coords.extend_from_slice(p);
            self.labels.push(label);
            self.weights.push(total * w / sum);
        }
    }
}

fn nearest_half_distances(pts: &[[f64; 3]]) -> Vec<f64> {
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            let best = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| super::distance(p, q))
                .fold(f64::INFINITY, f64::min);
            0.5 * best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_below_minimum_is_rejected() {
        for name in ExampleName::ALL {
            let err = generate_example(name, &GenerateOptions::with_resolution(7)).unwrap_err();
            assert!(matches!(err, Error::ResolutionTooSmall { got: 7, .. }));
        }
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(matches!("ex9".parse::<ExampleName>(), Err(Error::UnknownExample(_))));
        assert_eq!("full-ball".parse::<ExampleName>().unwrap(), ExampleName::FullBall);
    }

    #[test]
    fn full_ball_fills_the_ball_and_shell_tiles_the_complement() {
        let g = generate_example(ExampleName::FullBall, &GenerateOptions::with_resolution(8)).unwrap();
        for i in g.f_nodes() {
            assert!(norm(g.cloud.point(i)) < 1.0);
        }
        for i in g.dc_nodes() {
            let r = norm(g.cloud.point(i));
            assert!(r >= 1.0 - 1e-12 && r <= 8.0 + 1e-9, "r = {r}");
        }
        let vol: f64 = g.f_nodes().iter().map(|&i| g.cloud.quad_weight(i)).sum();
        assert!((vol - 4.0 * PI / 3.0).abs() < 1e-9);
        assert!(g.boundary.iter().any(|&b| b));
    }

    #[test]
    fn tangent_sphere_nodes_lie_on_the_sphere_inside_the_ball() {
        let g = generate_example(ExampleName::TangentSphere, &GenerateOptions::with_resolution(16)).unwrap();
        for i in g.f_nodes() {
            let p = g.cloud.point(i);
            let r = super::super::distance(p, &[0.5, 0.0, 0.0]);
            assert!((r - 0.5).abs() < 1e-12);
            assert!(norm(p) < 1.0);
        }
    }

    #[test]
    fn every_example_is_valid_across_resolutions() {
        for name in ExampleName::ALL {
            for res in [8, 12] {
                let g = generate_example(name, &GenerateOptions::with_resolution(res)).unwrap();
                assert!(!g.f_nodes().is_empty() && !g.dc_nodes().is_empty(), "{name}");
                g.cloud.validate_domain(&g.domain).unwrap();
            }
        }
    }

    #[test]
    fn half_space_annuli_cover_the_plate() {
        let g = generate_example(ExampleName::HalfSpace, &GenerateOptions::with_resolution(8)).unwrap();
        for i in g.f_nodes() {
            let k = g.annulus[i];
            assert!((1..=5).contains(&k));
        }
        for k in 1..=5 {
            assert!(g.f_nodes().iter().any(|&i| g.annulus[i] == k));
        }
    }
}

//! Experiment configuration: geometry, kernel, field, constraint, solver
//! settings and the assertions a run must satisfy.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, ExampleName, GenerateOptions};
use crate::problems::{PointSource, DEFAULT_POT_TOL, DEFAULT_RENORM_TOL};
use crate::qp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::verify::EXCEPTIONAL_BUDGET;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub assertions: Assertions,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Packaged example name; exclusive with `points`.
    pub example: Option<String>,
    /// Point file (CSV); relative paths resolve against the config file.
    pub points: Option<PathBuf>,
    /// Domain of a point file.
    pub domain: Option<DomainKind>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    pub dc_resolution: Option<usize>,
    #[serde(default = "default_truncation")]
    pub truncation_radius: f64,
    #[serde(default = "default_shells")]
    pub shells_per_octave: usize,
    #[serde(default = "default_annuli")]
    pub annuli: usize,
}

fn default_resolution() -> usize {
    GenerateOptions::default().resolution
}

fn default_truncation() -> f64 {
    GenerateOptions::default().truncation_radius
}

fn default_shells() -> usize {
    GenerateOptions::default().shells_per_octave
}

fn default_annuli() -> usize {
    GenerateOptions::default().annuli
}

impl GeometryConfig {
    pub fn generate_options(&self) -> GenerateOptions {
        GenerateOptions {
            resolution: self.resolution,
            dc_resolution: self.dc_resolution,
            truncation_radius: self.truncation_radius,
            shells_per_octave: self.shells_per_octave,
            annuli: self.annuli,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub alpha: f64,
    pub diag_scale: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { alpha: 2.0, diag_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    #[default]
    Zero,
    /// Case I: `f(x) = offset + gradient·x`, and `+∞` where `x₁ > infinite_beyond`.
    Affine {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        gradient: Vec<f64>,
        infinite_beyond: Option<f64>,
    },
    /// Case II: Green potential of point atoms in `D`.
    Sources { atoms: Vec<PointSource> },
}

impl FieldConfig {
    /// Case I value at `x`.
    pub fn affine_value(offset: f64, gradient: &[f64], infinite_beyond: Option<f64>, x: &[f64]) -> f64 {
        if infinite_beyond.is_some_and(|b| x[0] > b) {
            return f64::INFINITY;
        }
        offset + gradient.iter().zip(x).map(|(g, v)| g * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    #[default]
    Unconstrained,
    /// `ξ = scale·m` with `m` the surface or volume measure carried by the quadrature.
    Quadrature {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `ξ = Σ_k m|_{K_k}/k³` over the annuli of the half-space plate, times `scale`.
    AnnuliDecay {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub pot_tol: f64,
    pub renorm_tol: f64,
    pub exceptional_budget: f64,
    /// Also solve the condenser problem on the Riesz side.
    pub direct: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            pot_tol: DEFAULT_POT_TOL,
            renorm_tol: DEFAULT_RENORM_TOL,
            exceptional_budget: EXCEPTIONAL_BUDGET,
            direct: true,
        }
    }
}

/// Expected outcomes. Absent keys are not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Assertions {
    pub max_duality_gap: Option<f64>,
    /// Relative to `|w|`.
    pub max_frostman_violation: Option<f64>,
    pub capacity_range: Option<[f64; 2]>,
    pub w_range: Option<[f64; 2]>,
    pub max_mass_deficit: Option<f64>,
    pub min_support_fraction: Option<f64>,
    pub min_boundary_fraction: Option<f64>,
    /// Fails when the annuli probe shows energy escaping to infinity.
    pub no_energy_escape: Option<bool>,
    pub max_recovery_l1: Option<f64>,
    pub max_runtime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Directory for cached balayage columns; none keeps them in memory.
    pub cache_dir: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.geometry.points {
            if p.is_relative() {
                cfg.geometry.points = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        match (&g.example, &g.points) {
            (Some(name), None) => {
                name.parse::<ExampleName>()?;
            }
            (None, Some(_)) => {
                if g.domain.is_none() {
                    return Err(Error::Config("a point file needs [geometry.domain]".into()));
                }
            }
            _ => return Err(Error::Config("set exactly one of geometry.example and geometry.points".into())),
        }
        if !(self.kernel.alpha > 0.0 && self.kernel.alpha <= 2.0) {
            return Err(Error::Config(format!("kernel.alpha = {} outside (0, 2]", self.kernel.alpha)));
        }
        if !(self.kernel.diag_scale > 0.0) {
            return Err(Error::Config("kernel.diag_scale must be positive".into()));
        }
        let s = &self.solver;
        for (name, v) in [("tol", s.tol), ("pot_tol", s.pot_tol), ("renorm_tol", s.renorm_tol)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("solver.{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&s.exceptional_budget) {
            return Err(Error::Config("solver.exceptional_budget must lie in [0, 1)".into()));
        }
        match &self.constraint {
            ConstraintConfig::Unconstrained => {}
            ConstraintConfig::Quadrature { scale } | ConstraintConfig::AnnuliDecay { scale } => {
                if !(*scale > 0.0) {
                    return Err(Error::Config("constraint.scale must be positive".into()));
                }
            }
        }
        if let FieldConfig::Affine { offset, gradient, .. } = &self.field {
            if !offset.is_finite() || gradient.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("affine field coefficients must be finite".into()));
            }
        }
        Ok(())
    }

    /// Sets one sweepable parameter.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        match param {
            SweepParam::TruncationRadius => cfg.geometry.truncation_radius = value,
            SweepParam::Resolution => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("resolution {value} is not a whole number")));
                }
                cfg.geometry.resolution = value as usize;
            }
            SweepParam::Alpha => cfg.kernel.alpha = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    TruncationRadius,
    Resolution,
    Alpha,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncation_radius" => Ok(SweepParam::TruncationRadius),
            "resolution" => Ok(SweepParam::Resolution),
            "alpha" => Ok(SweepParam::Alpha),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}` (truncation_radius, resolution, alpha)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml("[geometry]\nexample = \"concentric\"\n").unwrap();
        assert_eq!(cfg.geometry.resolution, 16);
        assert_eq!(cfg.kernel.alpha, 2.0);
        assert_eq!(cfg.field, FieldConfig::Zero);
        assert_eq!(cfg.constraint, ConstraintConfig::Unconstrained);
        assert_eq!(cfg.solver.renorm_tol, 0.02);
        assert_eq!(cfg.solver.pot_tol, 1e-3);
        assert_eq!(cfg.solver.exceptional_budget, 1e-3);
        assert!(cfg.assertions.max_duality_gap.is_none());
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
[geometry]
example = "ex4"
resolution = 12
truncation_radius = 8.0
annuli = 5

[kernel]
alpha = 2.0
diag_scale = 1.9

[field]
kind = "sources"
atoms = [{ at = [0.5, 0.0, 0.0], weight = 1.0 }]

[constraint]
kind = "annuli_decay"

[solver]
direct = false

[assertions]
max_frostman_violation = 1e-3
capacity_range = [0.95, 1.05]
no_energy_escape = true
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.constraint, ConstraintConfig::AnnuliDecay { scale: 1.0 });
        let FieldConfig::Sources { atoms } = &cfg.field else { panic!() };
        assert_eq!(atoms[0].at, vec![0.5, 0.0, 0.0]);
        assert_eq!(cfg.assertions.capacity_range, Some([0.95, 1.05]));
        assert!(!cfg.solver.direct);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "[geometry]\nexample = \"ex9\"\n",
            "[geometry]\n",
            "[geometry]\nexample = \"ex1\"\n[kernel]\nalpha = 2.5\n",
            "[geometry]\nexample = \"ex1\"\nbogus = 1\n",
            "[geometry]\nexample = \"ex1\"\n[constraint]\nkind = \"quadrature\"\nscale = -1.0\n",
            "[geometry]\npoints = \"a.csv\"\n",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn sweep_parameters() {
        let cfg = RunConfig::from_toml("[geometry]\nexample = \"concentric\"\n").unwrap();
        let p: SweepParam = "resolution".parse().unwrap();
        assert_eq!(cfg.with_param(p, 24.0).unwrap().geometry.resolution, 24);
        assert!(cfg.with_param(p, 2.5).is_err());
        assert!("radius".parse::<SweepParam>().is_err());
        assert!(cfg.with_param(SweepParam::Alpha, 3.0).is_err());
    }

    #[test]
    fn affine_values() {
        assert_eq!(FieldConfig::affine_value(1.0, &[2.0, 0.0, 0.0], None, &[0.5, 1.0, 1.0]), 2.0);
        assert_eq!(FieldConfig::affine_value(1.0, &[], Some(0.9), &[0.95, 0.0, 0.0]), f64::INFINITY);
    }
}

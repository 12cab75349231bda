//! Config-driven experiment runs: generate, assemble, sweep, solve, verify,
//! and the JSON/CSV artifacts they leave behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balayage::{BalayageCache, BalayageColumns};
use crate::config::{Assertions, ConstraintConfig, FieldConfig, RunConfig, SweepParam};
use crate::error::{Error, Result};
use crate::geometry::{load_points, DomainSpec, ExampleGeometry, ExampleName, PointFormat};
use crate::green::{green_capacity, green_matrix, GreenOperator};
use crate::kernel::{assemble_with, riesz_kernel, AssembleOptions, KernelOperator};
use crate::linalg::{self, Vector};
use crate::problems::{
    annuli_measures, annuli_probe, duality_gap, field_point_sources, recover_condenser, solve_condenser_direct, solve_green_problem, AnnuliProbe, CondenserBlocks,
    ConstraintSpec, ExternalField, Minimizer, PointSource, Residuals, SolveOptions,
};
use crate::qp::QpOptions;
use crate::verify::{frostman_check_values, support_check, weighted_potential};

/// Energy ratio below which the annuli probe counts as escape.
pub const ESCAPE_RATIO: f64 = 0.2;
/// Number of samples along a slice.
pub const SLICE_SAMPLES: usize = 200;

/// Geometry resolved from a config; failures up to here are config errors.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub geometry: ExampleGeometry,
    pub label: String,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let g = &config.geometry;
    let (geometry, label) = match (&g.example, &g.points) {
        (Some(name), _) => {
            let name: ExampleName = name.parse()?;
            (crate::geometry::generate_example(name, &g.generate_options())?, name.as_str().to_string())
        }
        (None, Some(path)) => {
            let cloud = load_points(path, PointFormat::Csv)?;
            let domain = DomainSpec {
                kind: g.domain.clone().ok_or_else(|| Error::Config("a point file needs [geometry.domain]".into()))?,
                truncation_radius: g.truncation_radius,
            };
            cloud.validate_domain(&domain)?;
            let n = cloud.len();
            let geo = ExampleGeometry {
                name: ExampleName::Concentric,
                cloud,
                domain,
                annulus: vec![0; n],
                boundary: vec![false; n],
            };
            (geo, path.display().to_string())
        }
        (None, None) => return Err(Error::Config("no geometry given".into())),
    };
    if geometry.f_nodes().is_empty() || geometry.dc_nodes().is_empty() {
        return Err(Error::Config("both plates need nodes".into()));
    }
    Ok(Prepared {
        config: config.clone(),
        geometry,
        label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Vec<f64>,
    pub w: f64,
}

/// External field in a form that can be evaluated away from the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldEval {
    Zero,
    Affine { offset: f64, gradient: Vec<f64>, infinite_beyond: Option<f64> },
    Sources { sources: Vec<SweptSource> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweptSource {
    pub at: Vec<f64>,
    pub weight: f64,
    pub swept: Vec<Atom>,
}

/// Everything needed to evaluate Green potentials of the solution off the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub alpha: f64,
    pub dim: usize,
    pub bbox: [Vec<f64>; 2],
    pub frostman_w: f64,
    /// `λ` on `F`.
    pub plus: Vec<Atom>,
    /// `Bλ` on the complement, before renormalization.
    pub swept: Vec<Atom>,
    pub field: FieldEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResiduals {
    pub green: Residuals,
    pub direct: Option<Residuals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeProbe {
    #[serde(flatten)]
    pub probe: AnnuliProbe,
    /// Every annulus measure satisfies the constraint.
    pub feasible: bool,
    pub escape: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub geometry: String,
    pub alpha: f64,
    pub f_nodes: usize,
    pub dc_nodes: usize,
    pub objective: f64,
    pub frostman_w: f64,
    pub duality_gap: Option<f64>,
    pub mass_deficit: f64,
    pub support_fraction: f64,
    pub boundary_fraction: f64,
    pub capacity: f64,
    pub recovery_l1: Option<f64>,
    pub residuals: RouteResiduals,
    pub energy_escape: Option<EscapeProbe>,
    pub invariants: Vec<Invariant>,
    pub assertions: Vec<AssertionOutcome>,
    pub passed: bool,
    pub solution: Solution,
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn failed_assertions(&self) -> Vec<&AssertionOutcome> {
        self.assertions.iter().filter(|a| !a.passed).collect()
    }

    /// JSON with the timing fields removed, for determinism checks.
    pub fn without_timings(&self) -> RunReport {
        let mut r = self.clone();
        r.timings.clear();
        r
    }
}

struct Clock {
    timings: BTreeMap<String, f64>,
    last: Instant,
    start: Instant,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Clock {
            timings: BTreeMap::new(),
            last: now,
            start: now,
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.insert(stage.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }

    fn finish(mut self) -> BTreeMap<String, f64> {
        self.timings.insert("total".to_string(), self.start.elapsed().as_secs_f64());
        self.timings
    }
}

fn constraint_for(config: &ConstraintConfig, geo: &ExampleGeometry, f: &[usize]) -> Result<ConstraintSpec> {
    let quad: Vec<f64> = f.iter().map(|&i| geo.cloud.quad_weight(i)).collect();
    Ok(match config {
        ConstraintConfig::Unconstrained => ConstraintSpec::Unconstrained,
        ConstraintConfig::Quadrature { scale } => ConstraintSpec::Measure {
            xi: quad.iter().map(|q| scale * q).collect(),
        },
        ConstraintConfig::AnnuliDecay { scale } => {
            let annulus: Vec<usize> = f.iter().map(|&i| geo.annulus[i]).collect();
            if annulus.iter().all(|&k| k == 0) {
                return Err(Error::Config("annuli_decay needs a geometry with annuli".into()));
            }
            ConstraintSpec::Measure {
                xi: annulus.iter().zip(&quad).map(|(&k, q)| if k == 0 { 0.0 } else { scale * q / (k as f64).powi(3) }).collect(),
            }
        }
    })
}

fn atoms(geo: &ExampleGeometry, nodes: &[usize], weights: &[f64]) -> Vec<Atom> {
    nodes
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&i, &w)| Atom {
            x: geo.cloud.point(i).to_vec(),
            w,
        })
        .collect()
}

/// Operators, field and constraint of a prepared run, before any solve.
pub struct Assembled {
    pub k: KernelOperator,
    pub cols: Arc<BalayageColumns>,
    pub g: GreenOperator,
    pub field: ExternalField,
    pub field_eval: FieldEval,
    pub constraint: ConstraintSpec,
    pub opts: SolveOptions,
}

pub fn solve_options(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        qp: QpOptions {
            tol: cfg.solver.tol,
            max_iter: cfg.solver.max_iter,
            ..QpOptions::default()
        },
        pot_tol: cfg.solver.pot_tol,
        renorm_tol: cfg.solver.renorm_tol,
        exceptional_budget: cfg.solver.exceptional_budget,
    }
}

pub fn assemble_problem(prepared: &Prepared, cache: &BalayageCache) -> Result<Assembled> {
    assemble_timed(prepared, cache, &mut Clock::new())
}

fn assemble_timed(prepared: &Prepared, cache: &BalayageCache, clock: &mut Clock) -> Result<Assembled> {
    let cfg = &prepared.config;
    let geo = &prepared.geometry;
    let (f, q) = (geo.f_nodes(), geo.dc_nodes());
    let k = assemble_with(
        &geo.cloud,
        cfg.kernel.alpha,
        AssembleOptions {
            diag_scale: cfg.kernel.diag_scale,
            certify: true,
        },
    )?;
    clock.lap("assemble");
    let cols = cache.get_or_compute(&geo.cloud, &k, geo.domain.truncation_radius, &f, &q)?;
    clock.lap("balayage");
    let g = green_matrix(&k, &cols)?.with_quadrature(&geo.cloud);
    clock.lap("green");
    let (field, field_eval) = match &cfg.field {
        FieldConfig::Zero => (ExternalField::zero(f.len()), FieldEval::Zero),
        FieldConfig::Affine { offset, gradient, infinite_beyond } => {
            let values = f.iter().map(|&i| FieldConfig::affine_value(*offset, gradient, *infinite_beyond, geo.cloud.point(i))).collect();
            (
                ExternalField::case_i(values)?,
                FieldEval::Affine {
                    offset: *offset,
                    gradient: gradient.clone(),
                    infinite_beyond: *infinite_beyond,
                },
            )
        }
        FieldConfig::Sources { atoms: sources } => {
            let (field, swept) = field_point_sources(&geo.cloud, &geo.domain, &k, &cols, sources)?;
            let sources = sources
                .iter()
                .zip(&swept)
                .map(|(PointSource { at, weight }, s)| SweptSource {
                    at: at.clone(),
                    weight: *weight,
                    swept: atoms(geo, &q, s),
                })
                .collect();
            (field, FieldEval::Sources { sources })
        }
    };
    let constraint = constraint_for(&cfg.constraint, geo, &f)?;
    clock.lap("field");

    Ok(Assembled {
        k,
        cols,
        g,
        field,
        field_eval,
        constraint,
        opts: solve_options(cfg),
    })
}

/// Runs the full pipeline on a prepared geometry. Assertions are evaluated
/// but never turn into errors.
pub fn execute(prepared: &Prepared, cache: &BalayageCache) -> Result<RunReport> {
    let cfg = &prepared.config;
    let geo = &prepared.geometry;
    let mut clock = Clock::new();
    let (f, q) = (geo.f_nodes(), geo.dc_nodes());
    let alpha = cfg.kernel.alpha;
    let Assembled {
        k,
        cols,
        g,
        field,
        field_eval,
        constraint,
        opts,
    } = assemble_timed(prepared, cache, &mut clock)?;
    let green = solve_green_problem(&g, &field, &constraint, &opts)?;
    let lambda = green.lambda(&f);
    clock.lap("solve_green");
    info!("green route: objective {:.6e}, w {:.6e}, {} iterations", green.objective, green.frostman_w, green.diagnostics.iterations);

    let swept = cols.apply(&lambda);
    let mass_deficit = lambda.iter().sum::<f64>() - swept.iter().sum::<f64>();
    let recovered = match recover_condenser(&lambda, &cols, k.size(), opts.renorm_tol) {
        Ok(r) => Some(r),
        Err(Error::MassDeficit { deficit, tol }) => {
            warn!("recovered negative plate misses {deficit:.3e} of its mass (tolerance {tol})");
            None
        }
        Err(e) => return Err(e),
    };
    clock.lap("recover");

    let mut invariants = Vec::new();
    let mut inv = |name: &str, value: f64, limit: f64| {
        invariants.push(Invariant {
            name: name.to_string(),
            passed: value <= limit,
            value,
            limit,
        })
    };
    inv("green.asymmetry", g.asymmetry, crate::green::ASYMMETRY_LIMIT * linalg::max_abs(g.matrix()));
    inv("green.kkt", green.residuals.kkt, opts.qp.tol);
    let w_abs = green.frostman_w.abs();
    inv("green.frostman", green.residuals.frostman_lower_violation.max(green.residuals.frostman_upper_violation), opts.pot_tol * w_abs);
    inv("recovery.mass_deficit", mass_deficit, opts.renorm_tol);

    let (mut direct_residuals, mut gap, mut recovery_l1) = (None, None, None);
    if let Some(rec) = &recovered {
        // Riesz-side weighted potential of the recovered measure against the Green side.
        let k_ff = linalg::principal(k.matrix(), &f);
        let k_fq = linalg::block(k.matrix(), &f, &q);
        let lam = Vector::from_column_slice(&lambda);
        let riesz = &k_ff * &lam - &k_fq * Vector::from_vec(rec.measure.minus.gather(&q));
        let gl = g.matrix() * &lam;
        let mass: f64 = lambda.iter().sum();
        let max_k = linalg::max_abs(&k_fq);
        let mut excess = f64::NEG_INFINITY;
        for i in 0..f.len() {
            let raw = k_ff[(i, i)] - k_fq.row(i).dot(&cols.matrix.column(i).transpose());
            let bound = rec.mass_deficit.abs() * max_k + g.asymmetry * mass + (g.matrix()[(i, i)] - raw).abs() * lambda[i] + 1e-12 * gl[i].abs();
            excess = excess.max((riesz[i] - gl[i]).abs() - bound);
        }
        inv("recovery.riesz_green_potential", excess.max(0.0), 0.0);
    }
    if cfg.solver.direct {
        let quad_f: Vec<f64> = f.iter().map(|&i| geo.cloud.quad_weight(i)).collect();
        let blocks = CondenserBlocks {
            k: &k,
            f_nodes: &f,
            q_nodes: &q,
            quad_f: &quad_f,
        };
        let start_minus: Vec<f64> = match &recovered {
            Some(r) => r.measure.minus.gather(&q),
            None => {
                let m: f64 = swept.iter().sum();
                swept.iter().map(|v| v / m).collect()
            }
        };
        let direct = solve_condenser_direct(blocks, &field, &constraint, Some((&lambda, &start_minus)), &opts)?;
        clock.lap("solve_direct");
        let d = duality_gap(direct.objective, green.objective);
        inv("direct.duality_gap", d, 1e-3);
        inv(
            "direct.frostman",
            direct.residuals.frostman_lower_violation.max(direct.residuals.frostman_upper_violation),
            opts.pot_tol * direct.frostman_w.abs(),
        );
        if let (Some(rec), Minimizer::Condenser(m)) = (&recovered, &direct.minimizer) {
            recovery_l1 = Some(linalg::l1_distance(&rec.measure.minus.gather(&q), &m.minus.gather(&q)));
        }
        let mut r = direct.residuals;
        r.duality_gap = d;
        direct_residuals = Some(r);
        gap = Some(d);
    }
    if let ConstraintSpec::Measure { xi } = &constraint {
        // Every node is either Frostman-lower-satisfied or saturated.
        let pot = weighted_potential(&g, &lambda, &field);
        let strict = frostman_check_values(&pot, &lambda, Some(xi), &g.quad_weights, 0.0);
        inv("constraint.saturation_dichotomy", strict.lower_violation, opts.pot_tol * strict.w.abs());
    }

    let all: Vec<usize> = (0..f.len()).collect();
    let capacity = green_capacity(&g, &all, &opts.qp)?.value;
    clock.lap("capacity");
    let boundary: Vec<bool> = f.iter().map(|&i| geo.boundary[i]).collect();
    let support = support_check(&lambda, &g.quad_weights, &boundary);

    let annulus: Vec<usize> = f.iter().map(|&i| geo.annulus[i]).collect();
    let energy_escape = annulus.iter().any(|&a| a > 0).then(|| {
        let probe = annuli_probe(&g, &annulus);
        let feasible = match constraint.caps() {
            None => true,
            Some(xi) => annuli_measures(&annulus, &g.quad_weights)
                .iter()
                .all(|(_, nu)| nu.iter().zip(xi).all(|(v, c)| *v <= c + 1e-15)),
        };
        let escape = feasible && probe.shows_escape(ESCAPE_RATIO);
        EscapeProbe { probe, feasible, escape }
    });
    clock.lap("verify");

    let (lo, hi) = geo.cloud.bounding_box();
    let solution = Solution {
        alpha,
        dim: geo.cloud.dim(),
        bbox: [lo, hi],
        frostman_w: green.frostman_w,
        plus: atoms(geo, &f, &lambda),
        swept: atoms(geo, &q, &swept),
        field: field_eval,
    };
    let mut report = RunReport {
        geometry: prepared.label.clone(),
        alpha,
        f_nodes: f.len(),
        dc_nodes: q.len(),
        objective: green.objective,
        frostman_w: green.frostman_w,
        duality_gap: gap,
        mass_deficit,
        support_fraction: support.support_fraction,
        boundary_fraction: support.boundary_fraction,
        capacity,
        recovery_l1,
        residuals: RouteResiduals {
            green: green.residuals,
            direct: direct_residuals,
        },
        energy_escape,
        invariants,
        assertions: Vec::new(),
        passed: true,
        solution,
        timings: clock.finish(),
    };
    report.assertions = evaluate_assertions(&cfg.assertions, &report);
    report.passed = report.assertions.iter().all(|a| a.passed);
    Ok(report)
}

/// Checks the declared assertions against a report.
pub fn evaluate_assertions(a: &Assertions, r: &RunReport) -> Vec<AssertionOutcome> {
    let mut out = Vec::new();
    let mut at_most = |name: &str, value: Option<f64>, limit: Option<f64>| {
        if let Some(limit) = limit {
            let value = value.unwrap_or(f64::NAN);
            out.push(AssertionOutcome {
                name: name.to_string(),
                passed: value <= limit,
                value,
                expected: format!("<= {limit:e}"),
            });
        }
    };
    let frostman = r.residuals.green.frostman_lower_violation.max(r.residuals.green.frostman_upper_violation) / r.frostman_w.abs();
    at_most("max_duality_gap", r.duality_gap, a.max_duality_gap);
    at_most("max_frostman_violation", Some(frostman), a.max_frostman_violation);
    at_most("max_mass_deficit", Some(r.mass_deficit), a.max_mass_deficit);
    at_most("max_recovery_l1", r.recovery_l1, a.max_recovery_l1);
    at_most("max_runtime", r.timings.get("total").copied(), a.max_runtime);
    let mut at_least = |name: &str, value: f64, limit: Option<f64>| {
        if let Some(limit) = limit {
            out.push(AssertionOutcome {
                name: name.to_string(),
                passed: value >= limit,
                value,
                expected: format!(">= {limit}"),
            });
        }
    };
    at_least("min_support_fraction", r.support_fraction, a.min_support_fraction);
    at_least("min_boundary_fraction", r.boundary_fraction, a.min_boundary_fraction);
    for (name, value, range) in [("capacity_range", r.capacity, a.capacity_range), ("w_range", r.frostman_w, a.w_range)] {
        if let Some([lo, hi]) = range {
            out.push(AssertionOutcome {
                name: name.to_string(),
                passed: (lo..=hi).contains(&value),
                value,
                expected: format!("in [{lo}, {hi}]"),
            });
        }
    }
    if a.no_energy_escape == Some(true) {
        let escape = r.energy_escape.as_ref().is_some_and(|e| e.escape);
        out.push(AssertionOutcome {
            name: "no_energy_escape".into(),
            passed: !escape,
            value: r.energy_escape.as_ref().map_or(f64::NAN, |e| e.probe.final_ratio),
            expected: "no escaping annuli".into(),
        });
    }
    out
}

/// Writes `report.json`, `lambda.csv` and `minus.csv` into `dir`.
pub fn write_artifacts(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Dump(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    for (name, atoms) in [("lambda.csv", &report.solution.plus), ("minus.csv", &report.solution.swept)] {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Dump(e.to_string()))?;
        let dim = report.solution.dim;
        let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header).map_err(|e| Error::Dump(e.to_string()))?;
        for a in atoms {
            let mut row: Vec<String> = a.x.iter().map(|v| v.to_string()).collect();
            row.push(a.w.to_string());
            w.write_record(&row).map_err(|e| Error::Dump(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub objective: f64,
    pub duality_gap: f64,
    pub mass_deficit: f64,
    pub runtime: f64,
}

/// One full run per value, fanned out over the current rayon pool.
pub fn sweep(config: &RunConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let configs: Vec<RunConfig> = values.iter().map(|&v| config.with_param(param, v)).collect::<Result<_>>()?;
    let prepared: Vec<Prepared> = configs.iter().map(prepare).collect::<Result<_>>()?;
    prepared
        .par_iter()
        .zip(values)
        .map(|(p, &value)| {
            let t0 = Instant::now();
            let r = execute(p, &BalayageCache::in_memory())?;
            Ok(SweepRow {
                value,
                objective: r.objective,
                duality_gap: r.duality_gap.unwrap_or(f64::NAN),
                mass_deficit: r.mass_deficit,
                runtime: t0.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["value", "objective", "duality_gap", "mass_deficit", "runtime"]).map_err(|e| Error::Dump(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Dump(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Dump(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub green_potential: f64,
    pub weighted_potential: f64,
    pub frostman_w: f64,
}

fn potential(atoms: &[Atom], x: &[f64], alpha: f64, dim: usize) -> Result<f64> {
    atoms.iter().map(|a| Ok(a.w * riesz_kernel(x, &a.x, alpha, dim)?)).sum()
}

impl Solution {
    pub fn green_potential(&self, x: &[f64]) -> Result<f64> {
        Ok(potential(&self.plus, x, self.alpha, self.dim)? - potential(&self.swept, x, self.alpha, self.dim)?)
    }

    pub fn field_value(&self, x: &[f64]) -> Result<f64> {
        match &self.field {
            FieldEval::Zero => Ok(0.0),
            FieldEval::Affine { offset, gradient, infinite_beyond } => Ok(FieldConfig::affine_value(*offset, gradient, *infinite_beyond, x)),
            FieldEval::Sources { sources } => sources
                .iter()
                .map(|s| {
                    let direct = riesz_kernel(x, &s.at, self.alpha, self.dim)?;
                    Ok(s.weight * (direct - potential(&s.swept, x, self.alpha, self.dim)?))
                })
                .sum(),
        }
    }

    fn inside_bbox(&self, x: &[f64]) -> bool {
        let [lo, hi] = &self.bbox;
        x.len() == self.dim && x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= a - 1e-9 && *v <= b + 1e-9)
    }
}

/// Samples `U_G^λ`, `W = U_G^λ + f` and `w` at [`SLICE_SAMPLES`] points from
/// `from` to `to`; a zero-length axis gives one sample. Samples that hit a
/// charged node are reported as NaN.
pub fn slice(solution: &Solution, from: &[f64], to: &[f64]) -> Result<Vec<SliceRow>> {
    for p in [from, to] {
        if !solution.inside_bbox(p) {
            return Err(Error::AxisOutOfBounds(p.to_vec()));
        }
    }
    if solution.dim != 3 {
        return Err(Error::InvalidGeometry("slices are written for three dimensions".into()));
    }
    let samples = if crate::geometry::distance(from, to) == 0.0 { 1 } else { SLICE_SAMPLES };
    (0..samples)
        .map(|s| {
            let t = if samples == 1 { 0.0 } else { s as f64 / (samples - 1) as f64 };
            let x: Vec<f64> = from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect();
            let (u, field) = match (solution.green_potential(&x), solution.field_value(&x)) {
                (Ok(u), Ok(fv)) => (u, fv),
                (Err(Error::CoincidentPoints), _) | (_, Err(Error::CoincidentPoints)) => (f64::NAN, f64::NAN),
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            Ok(SliceRow {
                t,
                x1: x[0],
                x2: x[1],
                x3: x[2],
                green_potential: u,
                weighted_potential: u + field,
                frostman_w: solution.frostman_w,
            })
        })
        .collect()
}

pub fn write_slice<W: Write>(rows: &[SliceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Dump(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Dump(e.to_string()))
}

//! Randomized cross-module invariants, recorded into a deterministic ledger.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balayage::{balayage, balayage_columns, BalayageColumns};
use crate::error::Result;
use crate::geometry::{generate_example, separation_radii, ExampleGeometry, ExampleName, GenerateOptions};
use crate::green::{capacity, green_capacity, green_matrix, GreenOperator};
use crate::kelvin::{balayage_covariance, kelvin_measure};
use crate::kernel::{assemble_with, AssembleOptions, DiscreteMeasure, KernelOperator};
use crate::linalg::{self, Matrix, Vector};
use crate::problems::{
    duality_gap, recover_condenser, solve_condenser_direct, solve_green_problem, solve_green_problem_from, CondenserBlocks, ConstraintSpec, ExternalField, SolveOptions,
};
use crate::qp::{self, QpOptions, QpProblem};
use crate::qp::project_capped_simplex;
use crate::verify::{frostman_check_values, weighted_potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteSize {
    Small,
    Medium,
}

impl SuiteSize {
    fn params(self) -> Params {
        match self {
            SuiteSize::Small => Params {
                resolution: 8,
                truncation_radius: 4.0,
                qp_size: 30,
                trend: &[2.0, 4.0],
            },
            SuiteSize::Medium => Params {
                resolution: 12,
                truncation_radius: 8.0,
                qp_size: 80,
                trend: &[2.0, 4.0, 8.0],
            },
        }
    }

    fn tag(self) -> u64 {
        match self {
            SuiteSize::Small => 1,
            SuiteSize::Medium => 2,
        }
    }
}

struct Params {
    resolution: usize,
    truncation_radius: f64,
    qp_size: usize,
    trend: &'static [f64],
}

/// Faults injected on purpose to show that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Perturbs one off-diagonal kernel entry without its mirror.
    CorruptKernelEntry,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub name: String,
    pub size: SuiteSize,
    pub passed: bool,
    pub detail: String,
}

const ALPHA: f64 = 2.0;
const DIAG_SCALE: f64 = 1.9;
const SAMPLES: usize = 20;

type Check = Result<(bool, String)>;

struct Instance {
    geo: ExampleGeometry,
    k: KernelOperator,
    cols: BalayageColumns,
    g: GreenOperator,
}

fn assemble_opts() -> AssembleOptions {
    AssembleOptions {
        diag_scale: DIAG_SCALE,
        certify: true,
    }
}

fn concentric(res: usize, radius: f64) -> Result<ExampleGeometry> {
    generate_example(
        ExampleName::Concentric,
        &GenerateOptions {
            resolution: res,
            truncation_radius: radius,
            ..Default::default()
        },
    )
}

fn kernel_for(geo: &ExampleGeometry, fault: Option<Fault>) -> Result<KernelOperator> {
    let mut k = assemble_with(&geo.cloud, ALPHA, assemble_opts())?;
    if fault == Some(Fault::CorruptKernelEntry) {
        let m = k.matrix_mut();
        m[(0, 1)] += 0.5 * m[(0, 1)].abs().max(1.0);
    }
    Ok(k)
}

fn instance(p: &Params, fault: Option<Fault>) -> Result<Instance> {
    let geo = concentric(p.resolution, p.truncation_radius)?;
    let k = kernel_for(&geo, fault)?;
    let cols = balayage_columns(&k, &geo.f_nodes(), &geo.dc_nodes())?;
    let g = green_matrix(&k, &cols)?.with_quadrature(&geo.cloud);
    Ok(Instance { geo, k, cols, g })
}

/// Runs every invariant at each size. Failures, including errors raised while
/// building an instance, become ledger entries.
pub fn run_invariant_suite(seed: u64, sizes: &[SuiteSize], opts: &SuiteOptions) -> Vec<LedgerEntry> {
    let mut ledger = Vec::new();
    for &size in sizes {
        let p = size.params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (size.tag() << 32));
        let mut push = |name: &str, check: Check| {
            let (passed, detail) = check.unwrap_or_else(|e| (false, format!("error: {e}")));
            debug!("{name} [{size:?}]: {passed} {detail}");
            ledger.push(LedgerEntry {
                name: name.to_string(),
                size,
                passed,
                detail,
            });
        };

        push("geometry.point_cloud", geometry_valid(&p));
        push("geometry.truncation_nesting", truncation_nesting(&p));

        let inst = instance(&p, opts.fault);
        let kernel = match &inst {
            Ok(i) => Ok(i.k.clone()),
            Err(_) => concentric(p.resolution, p.truncation_radius).and_then(|geo| kernel_for(&geo, opts.fault)),
        };
        match &kernel {
            Ok(k) => {
                push("kernel.symmetry", kernel_symmetry(k));
                push("kernel.positive_definite", signed_energy_positive(k.matrix(), &mut rng));
                push("kernel.potential_linearity", potential_linearity(k, &mut rng));
                push("kernel.bilinear_consistency", bilinear_consistency(k, &mut rng));
            }
            Err(e) => {
                for name in ["kernel.symmetry", "kernel.positive_definite", "kernel.potential_linearity", "kernel.bilinear_consistency"] {
                    push(name, Ok((false, format!("error: {e}"))));
                }
            }
        }

        push("qp.uniqueness", qp_uniqueness(p.qp_size, &mut rng));
        push("qp.parallelogram", qp_parallelogram(p.qp_size, &mut rng));
        push("qp.variational_inequality", qp_variational(p.qp_size, &mut rng));

        let names = [
            "balayage.potential_domination",
            "balayage.energy_decrease",
            "balayage.cone_optimality",
            "green.positive_definite",
            "green.dominated_by_riesz",
            "green.capacity_positive",
            "problems.route_agreement",
            "problems.riesz_green_frostman",
            "problems.saturation_dichotomy",
            "verify.frostman_loop",
            "verify.w_consistency",
            "verify.uniqueness_by_constancy",
            "kelvin.additivity",
            "kelvin.balayage_covariance",
        ];
        match &inst {
            Ok(s) => {
                push(names[0], potential_domination(s, &mut rng));
                push(names[1], energy_decrease(s, &mut rng));
                push(names[2], cone_optimality(s, &mut rng));
                push(names[3], signed_energy_positive(s.g.matrix(), &mut rng));
                push(names[4], green_dominated(s));
                push(names[5], capacity_positive(s, &mut rng));
                let solved = solve_green_problem(&s.g, &ExternalField::zero(s.g.size()), &ConstraintSpec::Unconstrained, &SolveOptions::default());
                match solved {
                    Ok(r) => {
                        let lambda = r.lambda(&s.g.f_nodes);
                        push(names[6], route_agreement(s, &lambda, r.objective));
                        push(names[7], riesz_green_frostman(s, &lambda));
                        push(names[8], saturation_dichotomy(s));
                        push(names[9], frostman_loop(s, &lambda, r.objective));
                        push(names[10], w_consistency(s, r.frostman_w));
                        push(names[11], uniqueness_by_constancy(s, &lambda));
                    }
                    Err(e) => {
                        for name in &names[6..12] {
                            push(name, Ok((false, format!("error: {e}"))));
                        }
                    }
                }
                push(names[12], kelvin_additivity(s, &mut rng));
                push(names[13], kelvin_covariance(s));
            }
            Err(e) => {
                for name in names {
                    push(name, Ok((false, format!("error: {e}"))));
                }
            }
        }
        push("balayage.truncation_trend", truncation_trend(&p));
    }
    ledger
}

fn random_signed(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn random_feasible(n: usize, caps: Option<&[f64]>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(f64::EPSILON..1.0f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    match caps {
        None => Ok(w),
        Some(u) => project_capped_simplex(&w, Some(u), 1.0),
    }
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / n as f64 + Matrix::identity(n, n)
}

fn geometry_valid(p: &Params) -> Check {
    let opts = GenerateOptions {
        resolution: p.resolution,
        truncation_radius: 2.0,
        ..Default::default()
    };
    let mut bad = Vec::new();
    for name in ExampleName::ALL {
        let geo = generate_example(name, &opts)?;
        let ok = !geo.f_nodes().is_empty()
            && !geo.dc_nodes().is_empty()
            && geo.cloud.quad_weights().iter().all(|&w| w > 0.0 && w.is_finite())
            && separation_radii(&geo.cloud)?.iter().all(|&h| h > 0.0)
            && geo.cloud.validate_domain(&geo.domain).is_ok();
        if !ok {
            bad.push(name.as_str());
        }
    }
    Ok((bad.is_empty(), format!("{} examples, invalid: {:?}", ExampleName::ALL.len(), bad)))
}

fn truncation_nesting(p: &Params) -> Check {
    let r = p.truncation_radius;
    let small = concentric(p.resolution, r)?;
    let large = concentric(p.resolution, 2.0 * r)?;
    let outer: Vec<&[f64]> = large.dc_nodes().into_iter().map(|i| large.cloud.point(i)).collect();
    let missing = small
        .dc_nodes()
        .into_iter()
        .filter(|&i| {
            let x = small.cloud.point(i);
            !outer.iter().any(|y| crate::geometry::distance(x, y) < 1e-12)
        })
        .count();
    Ok((missing == 0, format!("R={r} -> {}: {missing} node(s) lost", 2.0 * r)))
}

fn kernel_symmetry(k: &KernelOperator) -> Check {
    let asym = linalg::asymmetry(k.matrix());
    let limit = 1e-14 * linalg::max_abs(k.matrix());
    Ok((asym <= limit, format!("asymmetry {asym:.3e}")))
}

fn signed_energy_positive(m: &Matrix, rng: &mut ChaCha8Rng) -> Check {
    let mut worst = f64::INFINITY;
    for _ in 0..SAMPLES {
        let s = Vector::from_vec(random_signed(m.nrows(), rng));
        worst = worst.min(s.dot(&(m * &s)) / s.norm_squared());
    }
    Ok((worst > 0.0, format!("min Rayleigh quotient {worst:.3e}")))
}

fn potential_linearity(k: &KernelOperator, rng: &mut ChaCha8Rng) -> Check {
    let n = k.size();
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let mu = DiscreteMeasure::from_dense(&random_weights(n, rng))?;
        let nu = DiscreteMeasure::from_dense(&random_weights(n, rng))?;
        let (a, b) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let lhs = k.potential_all(&mu.scaled(a).add(&nu.scaled(b))?)?;
        let (um, un) = (k.potential_all(&mu)?, k.potential_all(&nu)?);
        for i in 0..n {
            let rhs = a * um[i] + b * un[i];
            worst = worst.max((lhs[i] - rhs).abs() / rhs.abs());
        }
    }
    Ok((worst <= 1e-12, format!("max relative error {worst:.3e}")))
}

fn bilinear_consistency(k: &KernelOperator, rng: &mut ChaCha8Rng) -> Check {
    let n = k.size();
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let mu = DiscreteMeasure::from_dense(&random_weights(n, rng))?;
        let nu = DiscreteMeasure::from_dense(&random_weights(n, rng))?;
        let e = k.energy(&mu, &nu)?;
        let pair = linalg::dot(&k.potential_all(&nu)?, &mu.dense());
        worst = worst.max((e - pair).abs() / e.abs());
    }
    Ok((worst <= 1e-12, format!("max relative error {worst:.3e}")))
}

fn qp_uniqueness(n: usize, rng: &mut ChaCha8Rng) -> Check {
    let q = random_spd(n, rng);
    let c = random_signed(n, rng);
    let caps = vec![2.0 / n as f64; n];
    let problem = QpProblem::new(q, c, 1.0, Some(caps.clone()))?;
    let opts = QpOptions::default();
    let a = qp::solve(&problem, Some(&random_feasible(n, Some(&caps), rng)?), &opts)?;
    let b = qp::solve(&problem, Some(&random_feasible(n, Some(&caps), rng)?), &opts)?;
    let l1 = linalg::l1_distance(&a.weights, &b.weights);
    Ok((l1 <= 10.0 * opts.tol, format!("two-start L1 {l1:.3e}")))
}

fn qp_parallelogram(n: usize, rng: &mut ChaCha8Rng) -> Check {
    let q = random_spd(n, rng);
    let opts = QpOptions::default();
    let sol = qp::solve(&QpProblem::simplex(q.clone()), None, &opts)?;
    let w0 = Vector::from_column_slice(&sol.weights);
    let e0 = w0.dot(&(&q * &w0));
    let mut worst = f64::INFINITY;
    for _ in 0..SAMPLES {
        let w = Vector::from_vec(random_feasible(n, None, rng)?);
        let d = &w - &w0;
        let slack = w.dot(&(&q * &w)) - e0 + 4.0 * opts.tol - d.dot(&(&q * &d));
        worst = worst.min(slack);
    }
    Ok((worst >= 0.0, format!("min slack {worst:.3e}")))
}

fn qp_variational(n: usize, rng: &mut ChaCha8Rng) -> Check {
    let q = random_spd(n, rng);
    let c = random_signed(n, rng);
    let caps = vec![2.0 / n as f64; n];
    let problem = QpProblem::new(q.clone(), c.clone(), 1.0, Some(caps.clone()))?;
    let opts = QpOptions::default();
    let sol = qp::solve(&problem, None, &opts)?;
    let w0 = Vector::from_column_slice(&sol.weights);
    let grad = &q * &w0 + Vector::from_vec(c);
    let mut worst = f64::INFINITY;
    for _ in 0..SAMPLES {
        let w = Vector::from_vec(random_feasible(n, Some(&caps), rng)?);
        worst = worst.min(grad.dot(&(w - &w0)));
    }
    Ok((worst >= -opts.tol, format!("min inner product {worst:.3e}")))
}

fn random_on_f(s: &Instance, rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
    let f = s.geo.f_nodes();
    DiscreteMeasure::on_nodes(s.k.size(), &f, &random_weights(f.len(), rng))
}

fn potential_domination(s: &Instance, rng: &mut ChaCha8Rng) -> Check {
    let probes = s.geo.f_nodes();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..SAMPLES / 4 {
        let mu = random_on_f(s, rng)?;
        let beta = balayage(&mu, &s.k, &s.geo.dc_nodes())?.measure;
        let u = s.k.potential(&mu, &probes)?;
        let ub = s.k.potential(&beta, &probes)?;
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in u.iter().zip(&ub) {
            worst = worst.max((b - a) / scale);
        }
    }
    Ok((worst <= 1e-8, format!("max (U^beta - U^mu)/max U^mu {worst:.3e}")))
}

fn energy_decrease(s: &Instance, rng: &mut ChaCha8Rng) -> Check {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..SAMPLES / 4 {
        let mu = random_on_f(s, rng)?;
        let beta = balayage(&mu, &s.k, &s.geo.dc_nodes())?.measure;
        let (e, eb) = (s.k.energy(&mu, &mu)?, s.k.energy(&beta, &beta)?);
        worst = worst.max((eb - e) / e);
    }
    Ok((worst <= 1e-9, format!("max relative increase {worst:.3e}")))
}

fn cone_optimality(s: &Instance, rng: &mut ChaCha8Rng) -> Check {
    let q = s.geo.dc_nodes();
    let mu = random_on_f(s, rng)?;
    let nu = balayage(&mu, &s.k, &q)?.measure;
    let dist = |other: &DiscreteMeasure| -> Result<f64> {
        let d = mu.dense().iter().zip(other.dense()).map(|(a, b)| a - b).collect::<Vec<_>>();
        let d = Vector::from_vec(d);
        Ok(d.dot(&(s.k.matrix() * &d)))
    };
    let best = dist(&nu)?;
    let base = nu.gather(&q);
    let mut worst = f64::INFINITY;
    for t in 0..SAMPLES {
        // Half the competitors are small perturbations of the projection.
        let w: Vec<f64> = if t % 2 == 0 {
            base.iter().map(|v| (v + 1e-3 * rng.random_range(-1.0..1.0)).max(0.0)).collect()
        } else {
            random_weights(q.len(), rng).into_iter().map(|v| v * 2.0 / q.len() as f64).collect()
        };
        let other = DiscreteMeasure::on_nodes(s.k.size(), &q, &w)?;
        worst = worst.min(dist(&other)? - best);
    }
    Ok((worst >= -1e-12 * best.max(1e-300), format!("min energy margin {worst:.3e}")))
}

fn green_dominated(s: &Instance) -> Check {
    let f = &s.g.f_nodes;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..f.len() {
        for j in 0..f.len() {
            if i != j {
                worst = worst.max(s.g.matrix()[(i, j)] - s.k.entry(f[i], f[j]));
            }
        }
    }
    Ok((worst <= 1e-9, format!("max G - K {worst:.3e}")))
}

fn capacity_positive(s: &Instance, rng: &mut ChaCha8Rng) -> Check {
    let n = s.g.size();
    let opts = QpOptions::default();
    let mut worst = f64::INFINITY;
    for _ in 0..4 {
        let take = rng.random_range(1..=n.min(20));
        let mut e: Vec<usize> = (0..n).collect();
        for i in 0..take {
            let j = rng.random_range(i..n);
            e.swap(i, j);
        }
        e.truncate(take);
        e.sort_unstable();
        let cg = green_capacity(&s.g, &e, &opts)?.value;
        let cloud_nodes: Vec<usize> = e.iter().map(|&i| s.g.f_nodes[i]).collect();
        let ck = capacity(&s.k, &cloud_nodes, &opts)?.value;
        worst = worst.min(cg.min(ck));
    }
    Ok((worst > 0.0, format!("min capacity {worst:.3e}")))
}

fn blocks_quad(s: &Instance) -> Vec<f64> {
    s.geo.f_nodes().iter().map(|&i| s.geo.cloud.quad_weight(i)).collect()
}

fn route_agreement(s: &Instance, lambda: &[f64], green_objective: f64) -> Check {
    let (f, q) = (s.geo.f_nodes(), s.geo.dc_nodes());
    let opts = SolveOptions::default();
    let rec = recover_condenser(lambda, &s.cols, s.k.size(), opts.renorm_tol)?;
    let minus = rec.measure.minus.gather(&q);
    let quad = blocks_quad(s);
    let blocks = CondenserBlocks {
        k: &s.k,
        f_nodes: &f,
        q_nodes: &q,
        quad_f: &quad,
    };
    let direct = solve_condenser_direct(blocks, &ExternalField::zero(f.len()), &ConstraintSpec::Unconstrained, Some((lambda, &minus)), &opts)?;
    let gap = duality_gap(direct.objective, green_objective);
    Ok((gap <= 1e-3, format!("relative gap {gap:.3e}")))
}

fn riesz_green_frostman(s: &Instance, lambda: &[f64]) -> Check {
    let (f, q) = (s.geo.f_nodes(), s.geo.dc_nodes());
    let rec = recover_condenser(lambda, &s.cols, s.k.size(), SolveOptions::default().renorm_tol)?;
    let k_ff = linalg::principal(s.k.matrix(), &f);
    let k_fq = linalg::block(s.k.matrix(), &f, &q);
    let lam = Vector::from_column_slice(lambda);
    let riesz = &k_ff * &lam - &k_fq * Vector::from_vec(rec.measure.minus.gather(&q));
    let green = s.g.matrix() * &lam;
    // The Green operator differs from K_FF − K_FQ·B by its symmetrization and diagonal floor.
    let raw_diag: Vec<f64> = (0..f.len()).map(|i| k_ff[(i, i)] - k_fq.row(i).dot(&s.cols.matrix.column(i).transpose())).collect();
    let mass: f64 = lambda.iter().sum();
    let max_k = linalg::max_abs(&k_fq);
    let mut worst = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    for i in 0..f.len() {
        let diff = (riesz[i] - green[i]).abs();
        let bound = rec.mass_deficit.abs() * max_k + s.g.asymmetry * mass + (s.g.matrix()[(i, i)] - raw_diag[i]).abs() * lambda[i] + 1e-12 * green[i].abs();
        worst = worst.max(diff);
        excess = excess.max(diff - bound);
    }
    Ok((excess <= 0.0, format!("max |W_riesz - W_green| {worst:.3e}, deficit {:.3e}", rec.mass_deficit)))
}

fn saturation_dichotomy(s: &Instance) -> Check {
    let total: f64 = s.g.quad_weights.iter().sum();
    // Caps that bind on the heavier half of the sphere.
    let xi: Vec<f64> = s
        .g
        .f_nodes
        .iter()
        .zip(&s.g.quad_weights)
        .map(|(&i, q)| {
            let z = s.geo.cloud.point(i)[2];
            q / total * if z > 0.0 { 0.8 } else { 2.0 }
        })
        .collect();
    let constraint = ConstraintSpec::Measure { xi: xi.clone() };
    let field = ExternalField::zero(s.g.size());
    let r = solve_green_problem(&s.g, &field, &constraint, &SolveOptions::default())?;
    let lambda = r.lambda(&s.g.f_nodes);
    let pot = weighted_potential(&s.g, &lambda, &field);
    let res = frostman_check_values(&pot, &lambda, Some(&xi), &s.g.quad_weights, 0.0);
    let saturated = (0..xi.len()).filter(|&i| xi[i] - lambda[i] <= 1e-8).count();
    let ok = res.lower_violation <= 1e-3 * res.w.abs() && res.upper_violation <= 1e-3 * res.w.abs();
    Ok((ok, format!("saturated {saturated}/{}, violations {:.3e}/{:.3e}", xi.len(), res.lower_violation, res.upper_violation)))
}

fn frostman_loop(s: &Instance, lambda: &[f64], objective: f64) -> Check {
    let field = ExternalField::zero(s.g.size());
    let pot = weighted_potential(&s.g, lambda, &field);
    let res = frostman_check_values(&pot, lambda, None, &s.g.quad_weights, crate::verify::EXCEPTIONAL_BUDGET);
    if !res.passes(1e-3) {
        return Ok((false, format!("starting point fails Frostman: {:.3e}", res.max_violation())));
    }
    let opts = SolveOptions::default();
    let again = solve_green_problem_from(&s.g, &field, &ConstraintSpec::Unconstrained, Some(lambda), &opts)?;
    let gain = objective - again.objective;
    Ok((gain <= 10.0 * opts.qp.tol, format!("objective gain {gain:.3e}")))
}

fn w_consistency(s: &Instance, w: f64) -> Check {
    let all: Vec<usize> = (0..s.g.size()).collect();
    let cap = green_capacity(&s.g, &all, &QpOptions::default())?.value;
    let err = (w - 1.0 / cap).abs() / w.abs();
    Ok((err <= 1e-6, format!("w {w:.6}, 1/C {:.6}", 1.0 / cap)))
}

fn uniqueness_by_constancy(s: &Instance, lambda: &[f64]) -> Check {
    let chol = linalg::cholesky(s.g.matrix()).map_err(|p| crate::Error::NotPositiveDefinite { attempts: 1, pivot: p })?;
    let x = chol.solve(&Vector::from_element(s.g.size(), 1.0));
    let mass: f64 = x.sum();
    let candidate: Vec<f64> = x.iter().map(|v| v / mass).collect();
    if candidate.iter().any(|&v| v < 0.0) {
        return Ok((true, "constant-potential measure is not feasible".into()));
    }
    let l1 = linalg::l1_distance(&candidate, lambda);
    Ok((l1 <= 1e-6, format!("L1 to minimizer {l1:.3e}")))
}

fn kelvin_additivity(s: &Instance, rng: &mut ChaCha8Rng) -> Check {
    let x0 = [0.0, 0.0, 0.1];
    let a = random_on_f(s, rng)?;
    let b = random_on_f(s, rng)?;
    let lhs = kelvin_measure(&s.geo.cloud, &a.add(&b)?, &x0, ALPHA)?.dense();
    let rhs = kelvin_measure(&s.geo.cloud, &a, &x0, ALPHA)?.add(&kelvin_measure(&s.geo.cloud, &b, &x0, ALPHA)?)?.dense();
    let scale: f64 = lhs.iter().sum();
    let l1 = linalg::l1_distance(&lhs, &rhs);
    Ok((l1 <= 1e-14 * scale, format!("L1 {l1:.3e}")))
}

fn kelvin_covariance(s: &Instance) -> Check {
    let f = s.geo.f_nodes();
    let w = vec![1.0 / f.len() as f64; f.len()];
    let mu = DiscreteMeasure::on_nodes(s.k.size(), &f, &w)?;
    let l1 = balayage_covariance(&s.geo.cloud, &mu, &s.geo.dc_nodes(), &[0.0; 3], ALPHA, assemble_opts())?;
    Ok((l1 <= 5e-2, format!("L1 {l1:.3e}")))
}

fn truncation_trend(p: &Params) -> Check {
    let mut defects = Vec::new();
    for &r in p.trend {
        let geo = concentric(p.resolution, r)?;
        let k = assemble_with(&geo.cloud, ALPHA, assemble_opts())?;
        let f = geo.f_nodes();
        let mu = DiscreteMeasure::on_nodes(k.size(), &f, &vec![1.0 / f.len() as f64; f.len()])?;
        defects.push(balayage(&mu, &k, &geo.dc_nodes())?.mass_defect);
    }
    let ok = defects.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok((ok, format!("mass defects {}", defects.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(", "))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sizes_give_empty_ledger() {
        assert!(run_invariant_suite(42, &[], &SuiteOptions::default()).is_empty());
    }

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let a = run_invariant_suite(42, &[SuiteSize::Small], &SuiteOptions::default());
        let failed: Vec<_> = a.iter().filter(|e| !e.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
        assert!(a.len() >= 20);
        let b = run_invariant_suite(42, &[SuiteSize::Small], &SuiteOptions::default());
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_kernel_breaks_symmetry() {
        let ledger = run_invariant_suite(42, &[SuiteSize::Small], &SuiteOptions { fault: Some(Fault::CorruptKernelEntry) });
        let sym = ledger.iter().find(|e| e.name == "kernel.symmetry").unwrap();
        assert!(!sym.passed, "{sym:?}");
    }
}
